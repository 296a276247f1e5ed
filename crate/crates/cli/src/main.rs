use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sympflow_cli::{execute, load, Command, Status};

/// Geodesics, Jacobi fields and conjugate points on the area-preserving
/// diffeomorphisms of the flat torus.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// geodesic, jacobi-scan, ops-selftest or cpn-verify (default: the
    /// config file's `command`).
    command: Option<String>,
    /// `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n=64`.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (same as `--set out=DIR`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command.as_deref().map(|c| (c, Command::parse(c))) {
        None => None,
        Some((_, Some(c))) => Some(c),
        Some((name, None)) => {
            eprintln!("error: unknown command `{name}`");
            return ExitCode::from(Status::Config.code() as u8);
        }
    };
    let text = match &args.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some((t, p.display().to_string())),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return ExitCode::from(Status::Config.code() as u8);
            }
        },
        None => None,
    };
    let mut sets = args.sets.clone();
    if let Some(o) = &args.out {
        sets.push(format!("out={}", o.display()));
    }
    let cfg = match load(text.as_ref().map(|(t, p)| (t.as_str(), p.as_str())), &sets, command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Status::Config.code() as u8);
        }
    };
    let out = execute(&cfg);
    for n in &out.notes {
        eprintln!("{n}");
    }
    eprintln!("{}: status {} ({})", cfg.command.name(), out.status.code(), cfg.out.display());
    ExitCode::from(out.status.code() as u8)
}
