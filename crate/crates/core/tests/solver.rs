//! Geodesic solver and Jacobi-field behavior on known cases.

use nalgebra::DMatrix;
use sympflow::basis::GalerkinBasis;
use sympflow::fields::{casimir_q, SymplecticVectorField};
use sympflow::geodesic::{rhs_direct, rhs_vorticity, solve_geodesic, step_rk4, GeodesicState, SolverConfig};
use sympflow::jacobi::{assemble_phi, detect_conjugate, omega_gamma, PhiMethod, ScanConfig};
use sympflow::spectral::{Grid2D, SpectrumField};

const GENERIC: &[(i64, i64, f64, f64)] = &[(1, 0, 1.0, 0.0), (0, 2, 0.5, 0.0), (1, 1, 0.0, 1.0)];

fn field(n: usize, modes: &[(i64, i64, f64, f64)], h: [f64; 2]) -> SymplecticVectorField {
    SymplecticVectorField::from_modes(&Grid2D::new(n).unwrap(), modes, h).unwrap()
}

#[test]
fn harmonic_and_eigenmode_rhs_vanish() {
    assert_eq!(rhs_direct(&field(16, &[], [0.4, -1.3])).h1_norm(), 0.0);
    let v = field(32, &[(1, 0, 1.0, 0.0)], [0.0; 2]);
    assert!(rhs_direct(&v).h1_norm() < 1e-13);
    let q = casimir_q(&v);
    assert!(rhs_vorticity(&q, &v).max_abs() < 1e-13);
    assert_eq!(rhs_vorticity(&q, &SymplecticVectorField::zeros(v.grid())).max_abs(), 0.0);
}

#[test]
fn vorticity_rhs_is_casimir_of_direct_rhs() {
    let v = field(32, &[(1, 0, 1.0, 0.0), (0, 2, 0.5, 0.0)], [0.0; 2]);
    let lhs = rhs_vorticity(&casimir_q(&v), &v);
    let rhs = casimir_q(&rhs_direct(&v));
    assert!(lhs.sub(&rhs).max_abs() < 1e-10 * lhs.max_abs());
}

#[test]
fn stationary_step_keeps_velocity() {
    let v = field(32, &[(1, 0, 1.0, 0.0)], [0.0; 2]);
    let cfg = SolverConfig::new(0.01, 1.0).with_tracers(32);
    let s0 = GeodesicState::new(v.clone(), Some(32)).unwrap();
    let s1 = step_rk4(&s0, &cfg).unwrap();
    assert!(s1.v.sub(&v).h1_norm() < 1e-13);
    assert_eq!(s1.t, 0.01);
    assert_eq!(s1.eta.as_ref().unwrap().time(), 0.01);
}

#[test]
fn diagnostics_start_at_zero_and_stay_small_when_stationary() {
    let v = field(32, &[(2, 0, 1.0, 0.0)], [0.0; 2]);
    let run = solve_geodesic(&v, &SolverConfig::new(0.02, 10.0).with_tracers(32).with_diagnostics(100, 12)).unwrap();
    assert!(run.is_ok());
    let first = &run.diagnostics[0];
    assert_eq!(first.t, 0.0);
    assert!(first.casimir_residual < 1e-14 && first.adstar_residual < 1e-14 && first.detjac_dev < 1e-14);
    let last = run.diagnostics.last().unwrap();
    assert_eq!(last.t, 10.0);
    assert!(last.casimir_residual < 1e-10, "{}", last.casimir_residual);
}

#[test]
fn generic_flow_preserves_area_and_reverses() {
    let v0 = field(64, GENERIC, [0.0; 2]);
    let cfg = SolverConfig::new(1e-2, 1.0).with_tracers(64).with_diagnostics(0, 0);
    let fwd = solve_geodesic(&v0, &cfg).unwrap().into_result().unwrap();
    assert!(fwd.diagnostics.last().unwrap().detjac_dev < 1e-6);
    let back = solve_geodesic(&fwd.final_state.v.neg(), &SolverConfig::new(1e-2, 1.0)).unwrap().into_result().unwrap();
    let err = back.final_state.v.add(&v0).h1_norm() / v0.h1_norm();
    assert!(err < 1e-7, "{err:e}");
}

#[test]
fn zero_data_has_flat_solution_operator() {
    let g = Grid2D::new(16).unwrap();
    let v0 = SymplecticVectorField::zeros(&g);
    let run = solve_geodesic(&v0, &SolverConfig::new(0.05, 1.0).with_tracers(16).with_samples(1)).unwrap();
    let basis = GalerkinBasis::lowest(&g, 8).unwrap();
    let eye = DMatrix::<f64>::identity(8, 8);
    for method in [PhiMethod::Linearized, PhiMethod::OmegaGamma] {
        let phi = assemble_phi(&run.trajectory, &basis, 0.5, method).unwrap();
        assert!((phi.matrix() - &eye * 0.5).norm() < 1e-13, "{method:?}");
    }
    let og = omega_gamma(&run.trajectory, &basis, 1.0).unwrap();
    assert!((og.omega.last().unwrap() - &eye).norm() < 1e-13);
    assert!(og.gamma.last().unwrap().norm() < 1e-13);
    let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
    let scan = detect_conjugate(&run.trajectory, &basis, &times, &ScanConfig::default()).unwrap();
    assert!(scan.conjugate.is_empty() && scan.rejected.is_empty());
}

#[test]
fn harmonic_data_has_no_conjugate_points() {
    let v0 = field(16, &[], [0.7, 0.2]);
    let run = solve_geodesic(&v0, &SolverConfig::new(0.05, 5.0).with_samples(1)).unwrap();
    let basis = GalerkinBasis::lowest(v0.grid(), 12).unwrap();
    let times: Vec<f64> = (1..=50).map(|k| k as f64 * 0.1).collect();
    let scan = detect_conjugate(&run.trajectory, &basis, &times, &ScanConfig::default()).unwrap();
    assert!(scan.conjugate.is_empty());
    for r in &scan.records {
        assert!(r.sigma_min >= 0.5 * r.t, "{r:?}");
    }
}

#[test]
fn solution_operator_over_t_tends_to_identity() {
    let v0 = field(32, GENERIC, [0.1, -0.2]);
    let run = solve_geodesic(&v0, &SolverConfig::new(1e-3, 0.1).with_tracers(32).with_samples(1)).unwrap();
    let basis = GalerkinBasis::lowest(v0.grid(), 12).unwrap();
    let eye = DMatrix::<f64>::identity(12, 12);
    let defect = |t: f64| {
        let phi = assemble_phi(&run.trajectory, &basis, t, PhiMethod::Linearized).unwrap();
        (phi.matrix() / t - &eye).norm()
    };
    let c = defect(0.1) / 0.1;
    assert!(c.is_finite() && c > 0.0);
    for t in [1e-3, 1e-2] {
        assert!(defect(t) <= 2.0 * c * t, "t = {t}: {} vs {}", defect(t), c * t);
    }
}

#[test]
fn lowest_basis_on_cos_x_reports_no_conjugate_points() {
    let v0 = field(32, &[(1, 0, 1.0, 0.0)], [0.0; 2]);
    let run = solve_geodesic(&v0, &SolverConfig::new(0.02, 20.0).with_samples(1)).unwrap();
    let basis = GalerkinBasis::lowest(v0.grid(), 24).unwrap();
    let times: Vec<f64> = (1..=400).map(|k| k as f64 * 0.05).collect();
    let scan = detect_conjugate(&run.trajectory, &basis, &times, &ScanConfig::default()).unwrap();
    assert!(scan.conjugate.is_empty(), "{:?}", scan.conjugate);
    // The truncated scan does cross; the full-lattice confirmation rejects it.
    assert!(!scan.rejected.is_empty());
    for p in &scan.rejected {
        assert_eq!(p.dim_ker, p.dim_coker);
        assert!(p.confirmation.unwrap() > 1e-4);
    }
}

#[test]
fn casimir_density_examples() {
    let g = Grid2D::new(16).unwrap();
    let q = casimir_q(&field(16, &[(2, 0, 1.0, 0.0)], [0.0; 2]));
    let want = SpectrumField::from_modes(&g, &[(2, 0, 20.0, 0.0)]).unwrap();
    assert!(q.sub(&want).max_abs() < 1e-13);
    assert_eq!(casimir_q(&SymplecticVectorField::zeros(&g)).max_abs(), 0.0);
}
