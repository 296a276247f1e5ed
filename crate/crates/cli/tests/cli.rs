use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sympflow_cli::config::{load, Command as Cmd};

fn sympflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sympflow")).args(args).current_dir(dir).output().expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn odd_grid_is_a_config_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = sympflow(&["geodesic", "--set", "n=33", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("run").exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("even"));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.ini"), "command = geodesic\n# grid\ndt = fast\n").unwrap();
    let out = sympflow(&["--config", "run.ini"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.ini:3: dt"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cpn_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sympflow(&["cpn-verify", "--set", "cpn_n=2", "--out", "cpn"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("cpn/cpn.csv")).unwrap();
    assert!(csv.starts_with("check,value,tolerance,pass\n"));
    let names = column(&csv, "check");
    for want in ["J(0)", "J(2pi)", "velocity_skew_hermitian"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    assert!(column(&csv, "pass").iter().all(|p| p == "true"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sympflow(&["ops-selftest", "--set", "n=32", "--set", "trials=10", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("s/selftest.csv")).unwrap();
    assert!(column(&csv, "pass").iter().all(|p| p == "true"));
}

#[test]
fn stationary_geodesic_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cosx.ini"),
        "command = geodesic\nn = 16\nmodes = [(1, 0, 0.5, 0.0)]\n\n[geodesic]\nt_end = 10\ndt = 0.02\ndiagnostics_every = 50\n",
    )
    .unwrap();
    let out = sympflow(&["--config", "cosx.ini", "--out", "g"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("g/diagnostics.csv")).unwrap();
    assert!(csv.starts_with("t,energy,casimir_residual,adstar_residual,detjac_dev,vmax\n"));
    let e: Vec<f64> = column(&csv, "energy").iter().map(|x| x.parse().unwrap()).collect();
    let drift = e.iter().map(|x| (x - e[0]).abs() / e[0]).fold(0.0, f64::max);
    assert!(drift < 1e-8);
    // H^1 energy of cos x is 4π^2.
    assert!((e[0] - 4.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    assert_eq!(column(&csv, "t").last().unwrap().parse::<f64>().unwrap(), 10.0);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |o: &'static str| {
        vec!["geodesic", "--set", "n=16", "--set", "modes=[(1,0,0.5,0.0),(1,1,0.1,0.2)]", "--set", "t_end=0.5", "--out", o]
    };
    assert_eq!(sympflow(&args("a"), dir.path()).status.code(), Some(0));
    assert_eq!(sympflow(&args("b"), dir.path()).status.code(), Some(0));
    let a = fs::read(dir.path().join("a/diagnostics.csv")).unwrap();
    let b = fs::read(dir.path().join("b/diagnostics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn manifest_reparses_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = sympflow(
        &["jacobi-scan", "--set", "n=16", "--set", "t_end=0.2", "--set", "t_grid=0.05:0.2:4", "--set", "m=6", "--out", "j"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("j/manifest.txt")).unwrap();
    assert!(text.contains(&format!("# sympflow {}", env!("CARGO_PKG_VERSION"))));
    assert!(text.contains("# wall_time_s = "));
    let again = load(Some((&text, "manifest")), &[], None).unwrap();
    let direct = load(
        None,
        &["n=16", "t_end=0.2", "t_grid=0.05:0.2:4", "m=6", "out=j"].map(String::from),
        Some(Cmd::JacobiScan),
    )
    .unwrap();
    assert_eq!(again, direct);
    let scan = fs::read_to_string(dir.path().join("j/scan.csv")).unwrap();
    assert!(scan.starts_with("t,sigma_min,det_sign,dim_ker,dim_coker\n"));
    assert_eq!(scan.lines().count(), 5);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = sympflow(&["cpn-verify", "--out", "blocker/sub"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}
