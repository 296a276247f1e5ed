//! The four commands. Each fills tables and notes; writing happens in `execute`.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use sympflow::basis::GalerkinBasis;
use sympflow::cpn;
use sympflow::fields::SymplecticVectorField;
use sympflow::geodesic::{solve_geodesic, SolverConfig};
use sympflow::jacobi::{detect_conjugate, ScanConfig};
use sympflow::report::Check;
use sympflow::selftest;
use sympflow::spectral::Grid2D;

use crate::config::{real_terms, BasisSpec, Command, RunConfig};
use crate::output::{self, num, Table};

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Assertion = 1,
    Config = 2,
    Numerical = 3,
    Io = 4,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl From<&sympflow::Error> for Status {
    fn from(e: &sympflow::Error) -> Self {
        match e {
            sympflow::Error::Config(_) | sympflow::Error::Domain(_) => Status::Config,
            _ => Status::Numerical,
        }
    }
}

/// Tables to write plus the overall status.
pub struct Outcome {
    pub status: Status,
    pub tables: Vec<(&'static str, Table)>,
    pub notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { status: Status::Pass, tables: Vec::new(), notes: Vec::new() }
    }

    fn fail(&mut self, status: Status, note: String) {
        if self.status == Status::Pass {
            self.status = status;
        }
        self.notes.push(note);
    }
}

fn initial(cfg: &RunConfig, grid: &Grid2D) -> sympflow::Result<SymplecticVectorField> {
    let terms = real_terms(&cfg.modes).map_err(sympflow::Error::Config)?;
    SymplecticVectorField::from_modes(grid, &terms, cfg.harmonic)
}

fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new(&["check", "value", "tolerance", "pass"]);
    for c in checks {
        t.push(vec![c.name.clone(), num(c.value), num(c.tolerance), c.passed().to_string()]);
    }
    t
}

fn geodesic(cfg: &RunConfig, out: &mut Outcome) -> sympflow::Result<()> {
    let grid = Grid2D::new(cfg.n)?;
    let v0 = initial(cfg, &grid)?;
    let mut sc = SolverConfig::new(cfg.dt, cfg.t_end).with_form(cfg.form);
    sc.dealias = cfg.dealias;
    sc.exec = cfg.execution;
    if cfg.tracers {
        sc = sc.with_tracers(cfg.n).with_diagnostics(cfg.diagnostics_every, cfg.diagnostics_basis);
    } else {
        sc = sc.with_diagnostics(cfg.diagnostics_every, 0);
    }
    let run = solve_geodesic(&v0, &sc)?;
    let mut t = Table::new(&["t", "energy", "casimir_residual", "adstar_residual", "detjac_dev", "vmax"]);
    for r in &run.diagnostics {
        t.push(vec![num(r.t), num(r.energy), num(r.casimir_residual), num(r.adstar_residual), num(r.detjac_dev), num(r.vmax)]);
    }
    let e0 = run.diagnostics[0].energy;
    let drift = run.diagnostics.iter().map(|r| (r.energy - e0).abs() / e0.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    out.notes.push(format!("steps of {} up to t = {}", run.dt, run.final_state.t));
    out.notes.push(format!("relative energy drift = {drift:e}"));
    out.notes.push(format!("harmonic drift = {:e}", run.harmonic_drift));
    out.tables.push(("diagnostics.csv", t));
    if let Some(e) = &run.failure {
        out.fail(Status::from(e), e.to_string());
    }
    Ok(())
}

fn jacobi_scan(cfg: &RunConfig, out: &mut Outcome) -> sympflow::Result<()> {
    let grid = Grid2D::new(cfg.n)?;
    let v0 = initial(cfg, &grid)?;
    let mut sc = SolverConfig::new(cfg.dt, cfg.t_end).with_form(cfg.form).with_samples(1);
    sc.dealias = cfg.dealias;
    sc.exec = cfg.execution;
    let run = solve_geodesic(&v0, &sc)?.into_result()?;
    let basis = match cfg.basis {
        BasisSpec::Lowest => GalerkinBasis::lowest(&grid, cfg.m)?,
        BasisSpec::Sector { k2, kmax } => {
            let ks: Vec<(i64, i64)> = (-kmax..=kmax).map(|k1| (k1, k2)).collect();
            GalerkinBasis::from_wavevectors(&grid, &ks, true)?
        }
    };
    let scan_cfg = ScanConfig { threshold: cfg.threshold, confirm: cfg.confirm, exec: cfg.execution, ..Default::default() };
    let scan = detect_conjugate(&run.trajectory, &basis, &cfg.times(), &scan_cfg)?;
    let mut t = Table::new(&["t", "sigma_min", "det_sign", "dim_ker", "dim_coker"]);
    for r in &scan.records {
        t.push(vec![num(r.t), num(r.sigma_min), r.det_sign.to_string(), r.dim_ker.to_string(), r.dim_coker.to_string()]);
    }
    out.tables.push(("scan.csv", t));
    let mut c = Table::new(&["t", "multiplicity", "dim_ker", "dim_coker", "sigma_ratio", "confirmation", "accepted"]);
    for (list, accepted) in [(&scan.conjugate, true), (&scan.rejected, false)] {
        for p in list {
            let conf = p.confirmation.map(num).unwrap_or_default();
            c.push(vec![
                num(p.t),
                p.multiplicity.to_string(),
                p.dim_ker.to_string(),
                p.dim_coker.to_string(),
                num(p.sigma_ratio),
                conf,
                accepted.to_string(),
            ]);
        }
    }
    out.tables.push(("conjugate.csv", c));
    out.notes.push(format!("basis dimension {}", basis.dim()));
    out.notes.extend(scan.warnings.iter().map(|w| format!("warning: {w}")));
    for p in &scan.conjugate {
        if p.dim_ker != p.dim_coker {
            out.fail(Status::Assertion, format!("index {} at t = {}", p.dim_ker as i64 - p.dim_coker as i64, p.t));
        }
    }
    Ok(())
}

fn ops_selftest(cfg: &RunConfig, out: &mut Outcome) -> sympflow::Result<()> {
    let grid = Grid2D::new(cfg.n)?;
    let checks = selftest::run(&grid, cfg.seed, cfg.trials)?;
    for c in checks.iter().filter(|c| !c.passed()) {
        out.fail(Status::Assertion, format!("{} = {:e} exceeds {:e}", c.name, c.value, c.tolerance));
    }
    out.tables.push(("selftest.csv", checks_table(&checks)));
    Ok(())
}

fn cpn_verify(cfg: &RunConfig, out: &mut Outcome) -> sympflow::Result<()> {
    let mut checks = cpn::verify(cfg.cpn_n)?;
    let grid = Grid2D::new(cfg.n)?;
    checks.push(Check::below("torus_killing_rhs_unit", cpn::killing_stationarity_torus(&grid, [1.0, 0.0])?, 1e-13));
    checks.push(Check::below("torus_killing_rhs_zero", cpn::killing_stationarity_torus(&grid, [0.0, 0.0])?, 1e-13));
    let (dv, shift) = cpn::killing_geodesic(&grid, [0.3, -0.7], 5.0, 0.05)?;
    checks.push(Check::below("torus_killing_velocity", dv, 1e-10));
    checks.push(Check::below("torus_killing_translation", shift, 1e-10));
    for c in checks.iter().filter(|c| !c.passed()) {
        out.fail(Status::Assertion, format!("{} = {:e} against {:e}", c.name, c.value, c.tolerance));
    }
    out.tables.push(("cpn.csv", checks_table(&checks)));
    let path = cpn::UnitaryPath::new(cfg.cpn_n)?;
    let mut p = Table::new(&["t", "residual", "scale_re", "scale_im"]);
    for k in 1..8 {
        let t = PI * k as f64 / 4.0;
        let (r, a) = cpn::printed_form_residual(&path, t);
        p.push(vec![num(t), num(r), num(a.re), num(a.im)]);
    }
    out.tables.push(("printed_form.csv", p));
    Ok(())
}

/// Runs a validated configuration and writes its outputs.
pub fn execute(cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let mut out = Outcome::new();
    let result = match cfg.command {
        Command::Geodesic => geodesic(cfg, &mut out),
        Command::JacobiScan => jacobi_scan(cfg, &mut out),
        Command::OpsSelftest => ops_selftest(cfg, &mut out),
        Command::CpnVerify => cpn_verify(cfg, &mut out),
    };
    if let Err(e) = result {
        out.fail(Status::from(&e), e.to_string());
    }
    if let Err(e) = write_all(cfg, &out, start.elapsed().as_secs_f64()) {
        out.status = Status::Io;
        out.notes.push(format!("cannot write to {}: {e}", cfg.out.display()));
    }
    out
}

fn write_all(cfg: &RunConfig, out: &Outcome, wall: f64) -> std::io::Result<()> {
    let dir: &Path = &cfg.out;
    output::prepare(dir)?;
    for (name, t) in &out.tables {
        t.write(&dir.join(name))?;
    }
    output::write_manifest(dir, &cfg.to_text(), out.status.code(), wall, &out.notes)
}
