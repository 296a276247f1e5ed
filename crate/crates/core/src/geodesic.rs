//! Time integration of the `H^1` Euler-Arnold equation on symplectic fields,
//!
//! ```text
//! (1 + Δ) v_t + P(∇_v (1 + Δ) v + (∇v)^T Δ v) = 0,
//! ```
//!
//! in the direct form above or as transport of `q = Δ(1 + Δ) f`, together
//! with the Lagrangian flow map and the conservation diagnostics.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::basis::GalerkinBasis;
use crate::error::{config, Error, Result};
use crate::exec::Execution;
use crate::fields::{casimir_q, from_casimir, project_scaled, SymplecticVectorField};
use crate::flow::{FlowMap, PreparedFlow};
use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::spectral::{forward_pair, synthesize, Grid2D, Interpolator, PhysicalField, SpectrumField};

/// Which right-hand side drives the velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Direct,
    Vorticity,
}

/// Integration parameters.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub form: Formulation,
    pub dealias: bool,
    /// Particle lattice size for the flow map; `None` disables tracking.
    pub tracers: Option<usize>,
    /// Keep a trajectory sample every this many steps (0: first and last only).
    pub sample_every: usize,
    /// Diagnostics every this many steps (0: first and last only).
    pub diagnostics_every: usize,
    /// Galerkin dimension for the coadjoint residual (0 disables it).
    pub diagnostics_basis: usize,
    /// Bound on `dt max|v| n / 2π`.
    pub cfl_limit: f64,
    /// Speed above which the run is declared blown up.
    pub blowup_speed: f64,
    pub exec: Execution,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SolverConfig {
            dt,
            t_end,
            form: Formulation::Direct,
            dealias: true,
            tracers: None,
            sample_every: 0,
            diagnostics_every: 0,
            diagnostics_basis: 0,
            cfl_limit: 1.0,
            blowup_speed: 1e6,
            exec: Execution::default(),
        }
    }

    pub fn with_form(mut self, form: Formulation) -> Self {
        self.form = form;
        self
    }

    pub fn with_tracers(mut self, n: usize) -> Self {
        self.tracers = Some(n);
        self
    }

    pub fn with_samples(mut self, every: usize) -> Self {
        self.sample_every = every;
        self
    }

    pub fn with_diagnostics(mut self, every: usize, basis: usize) -> Self {
        self.diagnostics_every = every;
        self.diagnostics_basis = basis;
        self
    }

    /// Number of steps and the step actually used (`t_end / steps`).
    pub fn steps(&self) -> (usize, f64) {
        if self.t_end <= 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt).round().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return config(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return config(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.cfl_limit > 0.0) {
            return config("cfl_limit must be positive");
        }
        Ok(())
    }
}

/// One point of a geodesic.
#[derive(Clone, Debug)]
pub struct GeodesicState {
    pub t: f64,
    pub v: SymplecticVectorField,
    pub eta: Option<FlowMap>,
}

impl GeodesicState {
    pub fn new(v: SymplecticVectorField, tracers: Option<usize>) -> Result<Self> {
        let eta = match tracers {
            Some(n) => Some(FlowMap::identity(&Grid2D::new(n)?)),
            None => None,
        };
        Ok(GeodesicState { t: 0.0, v, eta })
    }
}

/// `scale * (1 + Δ)^{-1} P` of the lattice field `(t1, t2)`, optionally dealiased.
pub(crate) fn smooth_project(grid: &Grid2D, t1: Array2<f64>, t2: Array2<f64>, scale: f64, dealias: bool) -> SymplecticVectorField {
    let (u1, u2) = forward_pair(&PhysicalField::from_raw(grid, t1), &PhysicalField::from_raw(grid, t2));
    project_scaled(&u1, &u2, scale, true, dealias)
}

/// Lattice form of `∇_a (1 + Δ) b + (∇a)^T Δ b`.
fn direct_term(a: &SymplecticVectorField, b: &SymplecticVectorField) -> (Array2<f64>, Array2<f64>) {
    let g = a.grid();
    let (n, ko, kk) = (g.n(), g.k_odd(), g.kk());
    let fa = a.stream().coeffs().as_slice().expect("standard layout");
    let fb = b.stream().coeffs().as_slice().expect("standard layout");
    let h = a.harmonic();
    let im = |x: Complex64, k: f64| Complex64::new(-k * x.im, k * x.re);
    let p = synthesize(g, 10, |i, j, out| {
        let q = i * n + j;
        let (k1, k2) = (ko[i], ko[j]);
        let (f, psi, phi) = (fa[q], fb[q] * (1.0 + kk[q]), fb[q] * kk[q]);
        out[0] = im(f, k2);
        out[1] = im(f, -k1);
        out[2] = psi * (-k1 * k2);
        out[3] = psi * (-k2 * k2);
        out[4] = psi * (-k1 * k1);
        out[5] = f * (-k1 * k2);
        out[6] = f * (-k1 * k1);
        out[7] = f * (-k2 * k2);
        out[8] = im(phi, k1);
        out[9] = im(phi, k2);
        if q == 0 {
            out[0].re += h[0];
            out[1].re += h[1];
        }
    });
    let v: Vec<&[f64]> = p.iter().map(|f| f.values().as_slice().expect("standard layout")).collect();
    let (a1, a2, psi_xy, psi_yy, psi_xx) = (v[0], v[1], v[2], v[3], v[4]);
    let (f_xy, f_xx, f_yy, phi_x, phi_y) = (v[5], v[6], v[7], v[8], v[9]);
    // m = (1 + Δ) b = (ψ_y + h1, -ψ_x + h2), Δb = (φ_y, -φ_x)
    let mut t1 = Vec::with_capacity(n * n);
    let mut t2 = Vec::with_capacity(n * n);
    for s in 0..n * n {
        t1.push(a1[s] * psi_xy[s] + a2[s] * psi_yy[s] + f_xy[s] * phi_y[s] + f_xx[s] * phi_x[s]);
        t2.push(-a1[s] * psi_xx[s] - a2[s] * psi_xy[s] + f_yy[s] * phi_y[s] + f_xy[s] * phi_x[s]);
    }
    let shape = |t| Array2::from_shape_vec((n, n), t).expect("square buffer");
    (shape(t1), shape(t2))
}

/// `B(a, b) = -(1 + Δ)^{-1} P(∇_a (1 + Δ) b + (∇a)^T Δ b)`; `rhs_direct(v) = B(v, v)`.
pub fn direct_bilinear(a: &SymplecticVectorField, b: &SymplecticVectorField, dealias: bool) -> SymplecticVectorField {
    let (t1, t2) = direct_term(a, b);
    smooth_project(a.grid(), t1, t2, -1.0, dealias)
}

/// `B(a, b) + B(b, a)`, the derivative of `rhs_direct` at `a` in direction `b`.
pub fn direct_polarized(a: &SymplecticVectorField, b: &SymplecticVectorField, dealias: bool) -> SymplecticVectorField {
    let (mut t1, mut t2) = direct_term(a, b);
    let (s1, s2) = direct_term(b, a);
    t1 += &s1;
    t2 += &s2;
    smooth_project(a.grid(), t1, t2, -1.0, dealias)
}

/// `v_t = -(1 + Δ)^{-1} P(∇_v (1 + Δ) v + (∇v)^T Δ v)`.
pub fn rhs_direct(v: &SymplecticVectorField) -> SymplecticVectorField {
    direct_bilinear(v, v, true)
}

/// `q_t = -v.∇q` (dealiased), `v` the field with Casimir density `q`.
pub fn rhs_vorticity(q: &SpectrumField, v: &SymplecticVectorField) -> SpectrumField {
    rhs_vorticity_with(q, v, true)
}

fn rhs_vorticity_with(q: &SpectrumField, v: &SymplecticVectorField, dealias: bool) -> SpectrumField {
    let g = v.grid();
    let (n, ko) = (g.n(), g.k_odd());
    let f = v.stream().coeffs().as_slice().expect("standard layout");
    let qc = q.coeffs().as_slice().expect("standard layout");
    let h = v.harmonic();
    let im = |x: Complex64, k: f64| Complex64::new(-k * x.im, k * x.re);
    let p = synthesize(g, 4, |i, j, out| {
        let s = i * n + j;
        out[0] = im(f[s], ko[j]);
        out[1] = im(f[s], -ko[i]);
        out[2] = im(qc[s], ko[i]);
        out[3] = im(qc[s], ko[j]);
        if s == 0 {
            out[0].re += h[0];
            out[1].re += h[1];
        }
    });
    let mut adv = Array2::zeros((n, n));
    Zip::from(&mut adv)
        .and(p[0].values())
        .and(p[1].values())
        .and(p[2].values())
        .and(p[3].values())
        .for_each(|a, &v1, &v2, &qx, &qy| *a = -(v1 * qx + v2 * qy));
    let mut s = PhysicalField::from_raw(g, adv).forward();
    if dealias {
        s.dealias();
    }
    s
}

/// Velocity tendency of the chosen formulation.
fn tendency(v: &SymplecticVectorField, cfg: &SolverConfig) -> SymplecticVectorField {
    match cfg.form {
        Formulation::Direct => direct_bilinear(v, v, cfg.dealias),
        // RK4 commutes with the invertible linear map f -> q, so stepping v
        // with the transported q_t is stepping q itself; h stays frozen.
        Formulation::Vorticity => from_casimir(&rhs_vorticity_with(&casimir_q(v), v, cfg.dealias), [0.0, 0.0]),
    }
}

fn courant(v: &SymplecticVectorField, dt: f64) -> (f64, f64) {
    let vmax = v.vmax();
    (vmax, dt * vmax * v.grid().n() as f64 / (2.0 * PI))
}

/// One classical RK4 step of the velocity and (if tracked) the flow map.
pub fn step_rk4(state: &GeodesicState, cfg: &SolverConfig) -> Result<GeodesicState> {
    step_with_tendency(state, cfg, cfg.dt).map(|(s, _)| s)
}

fn step_with_tendency(
    state: &GeodesicState,
    cfg: &SolverConfig,
    dt: f64,
) -> Result<(GeodesicState, SymplecticVectorField)> {
    let (vmax, c) = courant(&state.v, dt);
    if !vmax.is_finite() || vmax > cfg.blowup_speed {
        return Err(Error::BlowUp { t: state.t, vmax });
    }
    if c >= cfg.cfl_limit {
        return Err(Error::Cfl { t: state.t, courant: c, limit: cfg.cfl_limit });
    }
    let v = &state.v;
    let k1 = tendency(v, cfg);
    let mut v2 = v.clone();
    v2.axpy(0.5 * dt, &k1);
    let k2 = tendency(&v2, cfg);
    let mut v3 = v.clone();
    v3.axpy(0.5 * dt, &k2);
    let k3 = tendency(&v3, cfg);
    let mut v4 = v.clone();
    v4.axpy(dt, &k3);
    let k4 = tendency(&v4, cfg);
    let mut next = v.clone();
    next.axpy(dt / 6.0, &k1);
    next.axpy(dt / 3.0, &k2);
    next.axpy(dt / 3.0, &k3);
    next.axpy(dt / 6.0, &k4);
    let t = state.t + dt;
    if !next.is_finite() {
        return Err(Error::BlowUp { t, vmax: f64::NAN });
    }
    let eta = state.eta.as_ref().map(|e| e.rk4_step([v, &v2, &v3, &v4], dt, cfg.exec));
    Ok((GeodesicState { t, v: next, eta }, k1))
}

/// Stored point of a trajectory with its time derivative (for dense output).
#[derive(Clone, Debug)]
pub struct TrajectorySample {
    pub state: GeodesicState,
    pub dv: SymplecticVectorField,
}

/// Samples of a solved geodesic at a uniform cadence.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Time between consecutive samples.
    pub cadence: f64,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.samples.last().map(|s| s.state.t).unwrap_or(0.0)
    }

    /// Index of the sample at time `t`, if one is there.
    pub fn sample_index(&self, t: f64) -> Option<usize> {
        if self.samples.is_empty() {
            return None;
        }
        let k = (t / self.cadence).round();
        if k < 0.0 || k as usize >= self.samples.len() {
            return None;
        }
        let k = k as usize;
        ((self.samples[k].state.t - t).abs() <= 1e-9 * self.cadence.max(1e-300)).then_some(k)
    }

    /// Velocity at `t`: exact at sample times, cubic Hermite in between.
    pub fn velocity_at(&self, t: f64) -> Result<SymplecticVectorField> {
        if let Some(k) = self.sample_index(t) {
            return Ok(self.samples[k].state.v.clone());
        }
        let te = self.t_end();
        if self.samples.len() < 2 || t < 0.0 || t > te {
            return Err(Error::Coverage(t));
        }
        let k = ((t / self.cadence).floor() as usize).min(self.samples.len() - 2);
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let h = b.state.t - a.state.t;
        let s = (t - a.state.t) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut v = a.state.v.scaled(h00);
        v.axpy(h * h10, &a.dv);
        v.axpy(h01, &b.state.v);
        v.axpy(h * h11, &b.dv);
        Ok(v)
    }

    /// Flow map stored at sample time `t`.
    pub fn flow_at(&self, t: f64) -> Option<&FlowMap> {
        self.sample_index(t).and_then(|k| self.samples[k].state.eta.as_ref())
    }
}

/// One row of the diagnostics report.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `<v, v>_1`.
    pub energy: f64,
    /// `‖q(t)∘η(t) - q0‖_2 / ‖q0‖_2` (NaN without a flow map).
    pub casimir_residual: f64,
    /// `‖Ad*_η v(t) - v0‖_1 / ‖v0‖_1` on the Galerkin basis (NaN if unavailable).
    pub adstar_residual: f64,
    /// `max |det Dη - 1|` (NaN without a flow map).
    pub detjac_dev: f64,
    pub vmax: f64,
}

/// Result of [`solve_geodesic`]. On failure the trajectory is partial and
/// `failure` says why.
#[derive(Clone, Debug)]
pub struct GeodesicRun {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub final_state: GeodesicState,
    pub failure: Option<Error>,
    /// Step size actually used.
    pub dt: f64,
    /// `max_t |h(t) - h(0)|`.
    pub harmonic_drift: f64,
}

impl GeodesicRun {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    /// Final state or the recorded failure.
    pub fn into_result(self) -> Result<GeodesicRun> {
        match self.failure.clone() {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Conservation diagnostics of a state relative to the initial data.
pub fn diagnostics(
    state: &GeodesicState,
    v0: &SymplecticVectorField,
    q0: &SpectrumField,
    basis: Option<&GalerkinBasis>,
) -> DiagnosticsRecord {
    let energy = crate::fields::h1_inner(&state.v, &state.v);
    let vmax = state.v.vmax();
    let (mut cas, mut ads, mut det) = (f64::NAN, f64::NAN, f64::NAN);
    if let Some(eta) = &state.eta {
        det = eta.detjac_deviation();
        cas = casimir_residual(eta, &casimir_q(&state.v), q0);
        if let Some(b) = basis {
            ads = adstar_residual(eta, &state.v, v0, b);
        }
    }
    DiagnosticsRecord { t: state.t, energy, casimir_residual: cas, adstar_residual: ads, detjac_dev: det, vmax }
}

/// `‖q∘η - q0‖_2 / ‖q0‖_2` sampled on the label lattice.
pub fn casimir_residual(eta: &FlowMap, q: &SpectrumField, q0: &SpectrumField) -> f64 {
    let labels = crate::flow::lattice_points(eta.grid());
    let a = Interpolator::from_fields(&[q]).eval(eta.positions()).pop().unwrap();
    let b = Interpolator::from_fields(&[q0]).eval(&labels).pop().unwrap();
    let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Coadjoint conservation residual `‖Ad*_η v - v0‖_1 / ‖v0‖_1` measured on a
/// Galerkin basis.
///
/// `Ad*_η` acts on the full field `v`; only the comparison is restricted to
/// the basis. Truncating `v` first would mix the energy that has left the
/// basis into the conservation defect.
pub fn adstar_residual(
    eta: &FlowMap,
    v: &SymplecticVectorField,
    v0: &SymplecticVectorField,
    basis: &GalerkinBasis,
) -> f64 {
    let pulled = PreparedFlow::new(eta).coad(v);
    let c: DVector<f64> = basis.coords(&pulled) - basis.coords(v0);
    let n0 = v0.h1_norm();
    if n0 == 0.0 {
        basis.norm(&c)
    } else {
        basis.norm(&c) / n0
    }
}

/// Integrates from `v0` to `cfg.t_end`.
pub fn solve_geodesic(v0: &SymplecticVectorField, cfg: &SolverConfig) -> Result<GeodesicRun> {
    cfg.validate()?;
    if cfg.dealias && !v0.stream().is_dealiased() {
        return config("initial stream has modes outside the dealiasing band");
    }
    let (nsteps, dt) = cfg.steps();
    let basis = match (cfg.diagnostics_basis, cfg.tracers) {
        (0, _) | (_, None) => None,
        (m, Some(_)) => Some(GalerkinBasis::lowest(v0.grid(), m)?),
    };
    let q0 = casimir_q(v0);
    let h0 = v0.harmonic();
    let mut state = GeodesicState::new(v0.clone(), cfg.tracers)?;
    let mut samples = Vec::new();
    let mut diags = vec![diagnostics(&state, v0, &q0, basis.as_ref())];
    let mut failure = None;
    let mut hdrift = 0.0f64;
    let every = |k: usize, e: usize| e > 0 && k.is_multiple_of(e);
    for step in 0..nsteps {
        match step_with_tendency(&state, cfg, dt) {
            Ok((next, k1)) => {
                if step == 0 || every(step, cfg.sample_every) {
                    samples.push(TrajectorySample { state: state.clone(), dv: k1 });
                }
                state = next;
                state.t = (step + 1) as f64 * dt;
                let h = state.v.harmonic();
                hdrift = hdrift.max((h[0] - h0[0]).abs().max((h[1] - h0[1]).abs()));
                let k = step + 1;
                if every(k, cfg.diagnostics_every) && k != nsteps {
                    diags.push(diagnostics(&state, v0, &q0, basis.as_ref()));
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let done = failure.is_none();
    if done {
        let dv = tendency(&state.v, cfg);
        if nsteps > 0 {
            diags.push(diagnostics(&state, v0, &q0, basis.as_ref()));
        }
        samples.push(TrajectorySample { state: state.clone(), dv });
    }
    let cadence = if cfg.sample_every > 0 { dt * cfg.sample_every as f64 } else { cfg.t_end.max(dt) };
    Ok(GeodesicRun {
        trajectory: Trajectory { samples, cadence },
        diagnostics: diags,
        final_state: state,
        failure,
        dt,
        harmonic_drift: hdrift,
    })
}
