//! Jacobi fields, the solution operator `Φ_t w0 = D exp(t v0) t w0`, its
//! `Ω - Γ` splitting and conjugate points.
//!
//! Jacobi fields are carried right-translated, `y = J∘η^{-1}`, together with
//! the velocity variation `z = δv`:
//!
//! ```text
//! y' = z + ad_v y,    z' = B(z, v) + B(v, z),    y(0) = 0,  z(0) = w0,
//! ```
//!
//! where `B` is the direct-form bilinear term (`v' = B(v, v)`). In the body
//! frame `u = Ad_{η^{-1}} y` the same operator reads `u(t) = (Ω_t - Γ_t) w0`
//! with `Ω_t = ∫ Ad_{η^{-1}} Ad*_{η^{-1}} dτ` and
//! `Γ_t = ∫ Ad_{η^{-1}} K_v y dτ`, `K_v w = ad*_w v`.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};

use crate::basis::GalerkinBasis;
use crate::error::{config, Error, Result};
use crate::exec::Execution;
use crate::fields::{project_P, SymplecticVectorField};
use crate::flow::{FlowMap, PreparedFlow};
use crate::geodesic::{direct_polarized, Trajectory};
use crate::lie::{ad, k_op};

/// Right-translated Jacobi field `y` and velocity variation `z` at time `t`.
#[derive(Clone, Debug)]
pub struct JacobiState {
    pub t: f64,
    pub y: SymplecticVectorField,
    pub z: SymplecticVectorField,
}

impl JacobiState {
    /// `y = 0`, `z = w0` at `t = 0`.
    pub fn initial(w0: &SymplecticVectorField) -> Self {
        JacobiState { t: 0.0, y: SymplecticVectorField::zeros(w0.grid()), z: w0.clone() }
    }
}

/// `(y', z')` against the background velocity `v` at the state's time.
pub fn jacobi_rhs(state: &JacobiState, v: &SymplecticVectorField) -> (SymplecticVectorField, SymplecticVectorField) {
    let mut dy = ad(v, &state.y);
    dy.axpy(1.0, &state.z);
    (dy, direct_polarized(&state.z, v, true))
}

/// One RK4 step given the background at `t`, `t + h/2` and `t + h`.
fn jacobi_step(s: &JacobiState, v: [&SymplecticVectorField; 3], h: f64) -> JacobiState {
    let stage = |base: &JacobiState, k: &(SymplecticVectorField, SymplecticVectorField), a: f64| {
        let mut y = base.y.clone();
        y.axpy(a, &k.0);
        let mut z = base.z.clone();
        z.axpy(a, &k.1);
        JacobiState { t: base.t, y, z }
    };
    let k1 = jacobi_rhs(s, v[0]);
    let k2 = jacobi_rhs(&stage(s, &k1, 0.5 * h), v[1]);
    let k3 = jacobi_rhs(&stage(s, &k2, 0.5 * h), v[1]);
    let k4 = jacobi_rhs(&stage(s, &k3, h), v[2]);
    let mut out = s.clone();
    for (k, w) in [(&k1, h / 6.0), (&k2, h / 3.0), (&k3, h / 3.0), (&k4, h / 6.0)] {
        out.y.axpy(w, &k.0);
        out.z.axpy(w, &k.1);
    }
    out.t = s.t + h;
    out
}

/// Background velocities at the nodes and midpoints of a uniform partition
/// of `[t0, t1]` into `steps` pieces: entry `2i` is node `i`, `2i + 1` the
/// midpoint after it.
struct Background {
    t0: f64,
    h: f64,
    v: Vec<SymplecticVectorField>,
}

impl Background {
    fn new(traj: &Trajectory, t0: f64, t1: f64, max_step: f64) -> Result<Self> {
        let steps = (((t1 - t0) / max_step) - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        let v = (0..=2 * steps).map(|i| traj.velocity_at(t0 + 0.5 * h * i as f64)).collect::<Result<Vec<_>>>()?;
        Ok(Background { t0, h, v })
    }

    fn steps(&self) -> usize {
        (self.v.len() - 1) / 2
    }

    fn stages(&self, i: usize) -> [&SymplecticVectorField; 3] {
        [&self.v[2 * i], &self.v[2 * i + 1], &self.v[2 * i + 2]]
    }
}

/// Default integration step: twice the sample spacing, so RK4 stages land
/// on stored samples.
fn default_step(traj: &Trajectory) -> f64 {
    2.0 * traj.cadence
}

/// Integrates the Jacobi equations from `w0` to time `t` along a solved
/// geodesic, with steps of at most `max_step` (`None`: twice the sample
/// spacing).
pub fn linearized(traj: &Trajectory, w0: &SymplecticVectorField, t: f64, max_step: Option<f64>) -> Result<JacobiState> {
    check_time(traj, t)?;
    let mut s = JacobiState::initial(w0);
    if t == 0.0 {
        return Ok(s);
    }
    let bg = Background::new(traj, 0.0, t, max_step.unwrap_or_else(|| default_step(traj)))?;
    for i in 0..bg.steps() {
        s = jacobi_step(&s, bg.stages(i), bg.h);
    }
    s.t = t;
    Ok(s)
}

fn check_time(traj: &Trajectory, t: f64) -> Result<()> {
    if !(t >= 0.0) || t > traj.t_end() * (1.0 + 1e-12) {
        return Err(Error::Coverage(t));
    }
    Ok(())
}

/// Coordinates in which a [`PhiMatrix`] is expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// `u = Ad_{η^{-1}} y = (Ω_t - Γ_t) w0`.
    Body,
    /// `y = J∘η^{-1}`.
    Spatial,
}

/// How [`assemble_phi`] computes the solution operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiMethod {
    /// One Jacobi solve per basis element.
    Linearized,
    /// Quadrature of `Ω_t` and a Volterra solve for `Γ_t`.
    OmegaGamma,
}

/// Matrix of `w0 -> Φ_t w0` on a Galerkin basis, with its `H^1` singular
/// values (descending).
#[derive(Clone, Debug)]
pub struct PhiMatrix {
    t: f64,
    frame: Frame,
    matrix: DMatrix<f64>,
    /// Lower Cholesky factor of the basis Gram matrix.
    l: DMatrix<f64>,
    singular: Vec<f64>,
}

impl PhiMatrix {
    pub fn new(matrix: DMatrix<f64>, basis: &GalerkinBasis, t: f64, frame: Frame) -> Result<Self> {
        Self::with_gram(matrix, basis.gram(), t, frame)
    }

    /// Builds the matrix against an explicit Gram matrix.
    pub fn with_gram(matrix: DMatrix<f64>, gram: &DMatrix<f64>, t: f64, frame: Frame) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != gram.nrows() {
            return config("matrix and Gram matrix have different sizes");
        }
        let l = Cholesky::new(gram.clone()).ok_or_else(|| Error::Config("Gram matrix is not positive definite".into()))?.l();
        let mut p = PhiMatrix { t, frame, matrix, l, singular: Vec::new() };
        p.singular = sorted_singular(&p.orthonormal());
        Ok(p)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Descending `H^1` singular values.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular.last().copied().unwrap_or(0.0)
    }

    /// The operator in `H^1`-orthonormal coordinates, `L^T M L^{-T}`.
    pub fn orthonormal(&self) -> DMatrix<f64> {
        let lt = self.l.transpose();
        let right = lt.clone().solve_upper_triangular(&DMatrix::identity(self.dim(), self.dim())).expect("Cholesky factor is invertible");
        lt * &self.matrix * right
    }

    /// Sign of the determinant (`0` for an exactly singular matrix).
    pub fn det_sign(&self) -> i8 {
        // Signs of the LU pivots avoid overflow of the determinant itself.
        let lu = self.matrix.clone().lu();
        let mut sign: f64 = lu.p().determinant();
        for d in lu.u().diagonal().iter() {
            if *d == 0.0 {
                return 0;
            }
            sign *= d.signum();
        }
        if sign > 0.0 {
            1
        } else {
            -1
        }
    }

    /// Coordinates of the unit-`H^1` inputs spanning the `count` smallest
    /// singular directions.
    pub fn kernel_vectors(&self, count: usize) -> Vec<DVector<f64>> {
        let svd = SVD::new(self.orthonormal(), false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let lt = self.l.transpose();
        order
            .into_iter()
            .take(count)
            .map(|i| {
                let vhat: DVector<f64> = vt.row(i).transpose();
                lt.solve_upper_triangular(&vhat).expect("Cholesky factor is invertible")
            })
            .collect()
    }

    /// `‖A - B‖_F / ‖B‖_F` in orthonormal coordinates.
    pub fn relative_distance(&self, reference: &PhiMatrix) -> f64 {
        let a = self.orthonormal();
        let b = reference.orthonormal();
        (a - &b).norm() / b.norm()
    }
}

fn sorted_singular(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Kernel and cokernel dimensions of a [`PhiMatrix`] at a threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexCheck {
    pub dim_ker: usize,
    pub dim_coker: usize,
    /// Set when the singular values on either side of the threshold are
    /// within a factor of 10 of each other.
    pub warning: Option<String>,
}

impl IndexCheck {
    pub fn index(&self) -> i64 {
        self.dim_ker as i64 - self.dim_coker as i64
    }
}

/// Counts singular values below `threshold` for the operator and for its
/// `H^1` adjoint `G^{-1} M^T G` (computed independently).
pub fn index_check(phi: &PhiMatrix, threshold: f64) -> IndexCheck {
    let ker = phi.singular_values();
    let coker = sorted_singular(&phi.orthonormal().transpose());
    let count = |s: &[f64]| s.iter().filter(|&&x| x < threshold).count();
    let dim_ker = count(ker);
    let below = ker.iter().copied().filter(|&x| x < threshold).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let above = ker.iter().copied().filter(|&x| x >= threshold).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    let warning = match (below, above) {
        (Some(b), Some(a)) if a < 10.0 * b => Some(format!(
            "threshold {threshold:e} sits inside a singular-value cluster ({b:e} .. {a:e})"
        )),
        _ => None,
    };
    IndexCheck { dim_ker, dim_coker: count(&coker), warning }
}

/// Default rank threshold relative to the largest singular value.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;

/// Largest Galerkin dimension accepted on a grid: a quarter of the resolved
/// directions.
pub fn max_basis_dim(grid: &crate::spectral::Grid2D) -> usize {
    let b = grid.dealias_band();
    ((2 * b + 1) * (2 * b + 1) + 1) / 4
}

fn check_basis(basis: &GalerkinBasis, grid_n: usize) -> Result<()> {
    let max = max_basis_dim(basis.grid());
    if basis.dim() > max {
        return config(format!("basis of dimension {} is too large for a {}-point grid (at most {max})", basis.dim(), grid_n));
    }
    Ok(())
}

fn flow_at(traj: &Trajectory, t: f64) -> Result<&FlowMap> {
    traj.flow_at(t).ok_or_else(|| Error::Config(format!("trajectory has no flow map at t = {t}")))
}

/// `P Ad_{η^{-1}} y`.
fn to_body(eta: &FlowMap, y: &SymplecticVectorField, exec: Execution) -> SymplecticVectorField {
    project_P(&PreparedFlow::new(eta).with_execution(exec).ad_inverse(&y.velocity()))
}

/// The solution operator at sample time `t` in the body frame.
pub fn assemble_phi(traj: &Trajectory, basis: &GalerkinBasis, t: f64, method: PhiMethod) -> Result<PhiMatrix> {
    assemble_phi_with(traj, basis, t, method, Execution::default())
}

pub fn assemble_phi_with(
    traj: &Trajectory,
    basis: &GalerkinBasis,
    t: f64,
    method: PhiMethod,
    exec: Execution,
) -> Result<PhiMatrix> {
    check_basis(basis, basis.grid().n())?;
    check_time(traj, t)?;
    match method {
        PhiMethod::Linearized => {
            let eta = flow_at(traj, t)?;
            let bg = if t > 0.0 { Some(Background::new(traj, 0.0, t, default_step(traj))?) } else { None };
            let cols = exec.map(basis.dim(), |j| {
                let mut s = JacobiState::initial(basis.element(j));
                if let Some(bg) = &bg {
                    for i in 0..bg.steps() {
                        s = jacobi_step(&s, bg.stages(i), bg.h);
                    }
                }
                basis.coords(&to_body(eta, &s.y, Execution::Sequential))
            });
            PhiMatrix::new(DMatrix::from_columns(&cols), basis, t, Frame::Body)
        }
        PhiMethod::OmegaGamma => {
            let series = omega_gamma_with(traj, basis, t, exec)?;
            series.phi.into_iter().last().ok_or(Error::Coverage(t))
        }
    }
}

/// `Ω_t`, `Γ_t` and `Φ_t = Ω_t - Γ_t` (body frame) at every sample up to `t`.
#[derive(Clone, Debug)]
pub struct OmegaGammaSeries {
    pub times: Vec<f64>,
    pub omega: Vec<DMatrix<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
    pub phi: Vec<PhiMatrix>,
}

/// Per-column state of the Volterra stepping.
#[derive(Clone)]
struct Column {
    /// `Ω w0` accumulated so far.
    omega: SymplecticVectorField,
    /// `Γ w0` accumulated so far.
    gamma: SymplecticVectorField,
    /// `Ad_{η^{-1}} Ad*_{η^{-1}} w0` at the previous node.
    a_prev: SymplecticVectorField,
    /// Volterra integrand at the previous node.
    f_prev: SymplecticVectorField,
    u: SymplecticVectorField,
    u_prev: SymplecticVectorField,
}

const VOLTERRA_TOL: f64 = 1e-12;
const VOLTERRA_MAX_ITER: usize = 60;

pub fn omega_gamma(traj: &Trajectory, basis: &GalerkinBasis, t: f64) -> Result<OmegaGammaSeries> {
    omega_gamma_with(traj, basis, t, Execution::default())
}

/// Trapezoid quadrature for `Ω_t` and forward trapezoid stepping of the
/// Volterra equation `u = Ω w0 - ∫ Ad_{η^{-1}} K_v Ad_η u dτ`, solved at
/// each node by fixed-point iteration. Operators act on full lattice fields;
/// only the reported matrices are compressed onto the basis.
pub fn omega_gamma_with(traj: &Trajectory, basis: &GalerkinBasis, t: f64, exec: Execution) -> Result<OmegaGammaSeries> {
    check_time(traj, t)?;
    let last = traj.sample_index(t).ok_or_else(|| Error::Config(format!("t = {t} is not a trajectory sample time")))?;
    let g = basis.grid();
    let mut cols: Vec<Column> = basis
        .elements()
        .iter()
        .map(|_| {
            let z = SymplecticVectorField::zeros(g);
            Column { omega: z.clone(), gamma: z.clone(), a_prev: z.clone(), f_prev: z.clone(), u: z.clone(), u_prev: z }
        })
        .collect();
    let mut out = OmegaGammaSeries { times: Vec::new(), omega: Vec::new(), gamma: Vec::new(), phi: Vec::new() };
    let mut t_prev = 0.0;
    for k in 0..=last {
        let sample = &traj.samples[k];
        let eta = sample.state.eta.as_ref().ok_or_else(|| Error::Config("trajectory was solved without tracers".into()))?;
        if eta.grid() != g || sample.state.v.grid() != g {
            return config("Ω-Γ assembly needs tracers on the velocity grid");
        }
        let v = &sample.state.v;
        let tk = sample.state.t;
        let h = tk - t_prev;
        let pf = PreparedFlow::with_inverse(eta)?.with_execution(Execution::Sequential);
        let f = |u: &SymplecticVectorField| -> Result<SymplecticVectorField> {
            let y = project_P(&pf.ad_forward(&u.velocity())?);
            Ok(project_P(&pf.ad_inverse(&k_op(v, &y).velocity())))
        };
        let next = exec.map(cols.len(), |j| -> Result<Column> {
            let c = &cols[j];
            let a = project_P(&pf.ad_inverse(&pf.coad_inverse(basis.element(j))?.velocity()));
            if k == 0 {
                let z = SymplecticVectorField::zeros(g);
                return Ok(Column { omega: z.clone(), gamma: z.clone(), a_prev: a, f_prev: z.clone(), u: z.clone(), u_prev: z });
            }
            let mut omega = c.omega.clone();
            omega.axpy(0.5 * h, &c.a_prev);
            omega.axpy(0.5 * h, &a);
            let mut base = omega.clone();
            base.axpy(-1.0, &c.gamma);
            base.axpy(-0.5 * h, &c.f_prev);
            // Linear extrapolation from the two previous nodes.
            let mut u = c.u.scaled(2.0);
            u.axpy(-1.0, &c.u_prev);
            let mut fu = f(&u)?;
            let mut converged = false;
            for _ in 0..VOLTERRA_MAX_ITER {
                let mut next = base.clone();
                next.axpy(-0.5 * h, &fu);
                let change = next.sub(&u).h1_norm();
                u = next;
                fu = f(&u)?;
                if change <= VOLTERRA_TOL * u.h1_norm().max(f64::MIN_POSITIVE) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Numerical(format!("Volterra iteration did not converge at t = {tk}")));
            }
            let mut gamma = c.gamma.clone();
            gamma.axpy(0.5 * h, &c.f_prev);
            gamma.axpy(0.5 * h, &fu);
            Ok(Column { omega, gamma, a_prev: a, f_prev: fu, u_prev: c.u.clone(), u })
        });
        cols = next.into_iter().collect::<Result<Vec<_>>>()?;
        let mat = |sel: fn(&Column) -> &SymplecticVectorField| {
            DMatrix::from_columns(&cols.iter().map(|c| basis.coords(sel(c))).collect::<Vec<_>>())
        };
        out.times.push(tk);
        out.omega.push(mat(|c| &c.omega));
        out.gamma.push(mat(|c| &c.gamma));
        out.phi.push(PhiMatrix::new(mat(|c| &c.u), basis, tk, Frame::Body)?);
        t_prev = tk;
    }
    Ok(out)
}

/// Smallest eigenvalue of the `H^1`-symmetrized matrix and the relative size
/// of its antisymmetric part.
pub fn symmetric_spectrum(m: &DMatrix<f64>, basis: &GalerkinBasis) -> Result<(f64, f64)> {
    let p = PhiMatrix::new(m.clone(), basis, 0.0, Frame::Body)?;
    let o = p.orthonormal();
    let sym = (&o + o.transpose()) * 0.5;
    let asym = (&o - o.transpose()).norm() / (2.0 * o.norm());
    let min = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min, asym))
}

/// Settings for [`detect_conjugate`].
#[derive(Clone, Debug)]
pub struct ScanConfig {
    /// Rank threshold relative to `σ_max`.
    pub threshold: f64,
    /// Verify each candidate with a full-lattice Jacobi solve.
    pub confirm: bool,
    /// Bound on `‖y(t*)‖ / ‖w0‖` for a confirmed candidate.
    pub confirm_tol: f64,
    /// Step of the confirming solve (`None`: the sample spacing).
    pub confirm_step: Option<f64>,
    pub exec: Execution,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { threshold: DEFAULT_THRESHOLD, confirm: true, confirm_tol: 1e-4, confirm_step: None, exec: Execution::default() }
    }
}

/// One row of a conjugate-point scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRecord {
    pub t: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub det_sign: i8,
    pub dim_ker: usize,
    pub dim_coker: usize,
}

/// A refined conjugate time.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugatePoint {
    pub t: f64,
    pub multiplicity: usize,
    /// `σ_min / σ_max` at `t`.
    pub sigma_ratio: f64,
    pub dim_ker: usize,
    pub dim_coker: usize,
    /// Worst `‖y(t)‖ / ‖w0‖` over the kernel directions, on the full lattice.
    pub confirmation: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ConjugateScan {
    pub records: Vec<ScanRecord>,
    pub conjugate: Vec<ConjugatePoint>,
    /// Candidates that failed the rank threshold or the confirmation.
    pub rejected: Vec<ConjugatePoint>,
    pub warnings: Vec<String>,
}

/// `(Y, Z)` of the compressed matrix Jacobi system at a time.
#[derive(Clone)]
struct MatState {
    t: f64,
    y: DMatrix<f64>,
    z: DMatrix<f64>,
}

/// Compressed operators `A = ad_v` and `C = B(., v) + B(v, .)`, cached per
/// background field.
struct Operators<'a> {
    basis: &'a GalerkinBasis,
    exec: Execution,
    cache: Vec<(SymplecticVectorField, DMatrix<f64>, DMatrix<f64>)>,
}

/// Background fields closer than this (relative `H^1`) share operator matrices.
const OPERATOR_CACHE_TOL: f64 = 1e-13;

impl<'a> Operators<'a> {
    fn get(&mut self, v: &SymplecticVectorField) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let scale = v.h1_norm().max(f64::MIN_POSITIVE);
        if let Some((_, a, c)) = self.cache.iter().find(|(w, _, _)| w.sub(v).h1_norm() <= OPERATOR_CACHE_TOL * scale) {
            return Ok((a.clone(), c.clone()));
        }
        let a = self.basis.operator_matrix_with(self.exec, |w| Ok(ad(v, w)))?;
        let c = self.basis.operator_matrix_with(self.exec, |w| Ok(direct_polarized(w, v, true)))?;
        if self.cache.len() > 64 {
            self.cache.remove(0);
        }
        self.cache.push((v.clone(), a.clone(), c.clone()));
        Ok((a, c))
    }
}

fn mat_rhs(a: &DMatrix<f64>, c: &DMatrix<f64>, y: &DMatrix<f64>, z: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (a * y + z, c * z)
}

fn mat_advance(ops: &mut Operators<'_>, traj: &Trajectory, s: &MatState, t1: f64) -> Result<MatState> {
    if t1 <= s.t {
        return Ok(s.clone());
    }
    let bg = Background::new(traj, s.t, t1, default_step(traj))?;
    let mut st = s.clone();
    for i in 0..bg.steps() {
        let [v0, vh, v1] = bg.stages(i);
        let (a0, c0) = ops.get(v0)?;
        let (ah, ch) = ops.get(vh)?;
        let (a1, c1) = ops.get(v1)?;
        let h = bg.h;
        let k1 = mat_rhs(&a0, &c0, &st.y, &st.z);
        let k2 = mat_rhs(&ah, &ch, &(&st.y + &k1.0 * (0.5 * h)), &(&st.z + &k1.1 * (0.5 * h)));
        let k3 = mat_rhs(&ah, &ch, &(&st.y + &k2.0 * (0.5 * h)), &(&st.z + &k2.1 * (0.5 * h)));
        let k4 = mat_rhs(&a1, &c1, &(&st.y + &k3.0 * h), &(&st.z + &k3.1 * h));
        st.y += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
        st.z += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
        st.t = bg.t0 + (i + 1) as f64 * h;
    }
    st.t = t1;
    Ok(st)
}

/// Scans `σ_min` of the compressed (spatial-frame) solution operator over an
/// increasing time grid, refines candidates by bisection on the determinant
/// sign or golden-section search on `σ_min / σ_max`, and optionally confirms
/// each one on the full lattice.
pub fn detect_conjugate(traj: &Trajectory, basis: &GalerkinBasis, t_grid: &[f64], cfg: &ScanConfig) -> Result<ConjugateScan> {
    check_basis(basis, basis.grid().n())?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return config("scan times must be positive and strictly increasing");
    }
    check_time(traj, *t_grid.last().expect("non-empty"))?;
    let m = basis.dim();
    let mut ops = Operators { basis, exec: cfg.exec, cache: Vec::new() };
    let phi = |s: &MatState| PhiMatrix::new(s.y.clone(), basis, s.t, Frame::Spatial);
    let mut scan = ConjugateScan::default();
    let mut states = Vec::with_capacity(t_grid.len() + 1);
    let mut st = MatState { t: 0.0, y: DMatrix::zeros(m, m), z: DMatrix::identity(m, m) };
    states.push(st.clone());
    let mut ratios = Vec::new();
    for &t in t_grid {
        st = mat_advance(&mut ops, traj, &st, t)?;
        let p = phi(&st)?;
        let ic = index_check(&p, cfg.threshold * p.sigma_max());
        ratios.push(p.sigma_min() / p.sigma_max());
        scan.records.push(ScanRecord {
            t,
            sigma_min: p.sigma_min(),
            sigma_max: p.sigma_max(),
            det_sign: p.det_sign(),
            dim_ker: ic.dim_ker,
            dim_coker: ic.dim_coker,
        });
        states.push(st.clone());
    }
    if ratios.windows(2).any(|w| w[0] < cfg.threshold && w[1] < cfg.threshold) {
        scan.warnings.push("scan grid too coarse: σ_min stays below threshold across adjacent samples".into());
    }
    // Candidates as brackets over states[..] (index 0 is t = 0).
    let mut brackets: Vec<(usize, usize, bool)> = Vec::new();
    for i in 1..scan.records.len() {
        let (a, b) = (&scan.records[i - 1], &scan.records[i]);
        if a.det_sign != 0 && b.det_sign != 0 && a.det_sign != b.det_sign {
            brackets.push((i, i + 1, true));
        }
    }
    for i in 0..ratios.len() {
        let left = if i == 0 { f64::INFINITY } else { ratios[i - 1] };
        let right = ratios.get(i + 1).copied().unwrap_or(f64::INFINITY);
        if ratios[i] <= left && ratios[i] < right {
            let covered = brackets.iter().any(|&(a, b, _)| a <= i + 1 && i < b);
            if !covered {
                brackets.push((i, (i + 2).min(states.len() - 1), false));
            }
        }
    }
    brackets.sort_by_key(|b| b.0);
    for (lo, hi, by_sign) in brackets {
        let base = &states[lo];
        let mut eval = |t: f64| -> Result<PhiMatrix> { phi(&mat_advance(&mut ops, traj, base, t)?) };
        let (mut a, mut b) = (states[lo].t, states[hi].t);
        let t_star = if by_sign {
            let sa = eval(a)?.det_sign();
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                if b - a <= 1e-13 * b.max(1.0) {
                    break;
                }
                if eval(mid)?.det_sign() == sa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        } else {
            let ratio = |p: &PhiMatrix| p.sigma_min() / p.sigma_max();
            let gr = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = b - gr * (b - a);
            let mut d = a + gr * (b - a);
            let (mut fc, mut fd) = (ratio(&eval(c)?), ratio(&eval(d)?));
            for _ in 0..200 {
                if b - a <= 1e-12 * b.max(1.0) {
                    break;
                }
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - gr * (b - a);
                    fc = ratio(&eval(c)?);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + gr * (b - a);
                    fd = ratio(&eval(d)?);
                }
            }
            0.5 * (a + b)
        };
        let p = eval(t_star)?;
        let thr = cfg.threshold * p.sigma_max();
        let ic = index_check(&p, thr);
        if let Some(w) = &ic.warning {
            scan.warnings.push(format!("t = {t_star}: {w}"));
        }
        let mut point = ConjugatePoint {
            t: t_star,
            multiplicity: ic.dim_ker,
            sigma_ratio: p.sigma_min() / p.sigma_max(),
            dim_ker: ic.dim_ker,
            dim_coker: ic.dim_coker,
            confirmation: None,
        };
        if ic.dim_ker == 0 {
            // A shallow minimum of σ_min is not a candidate worth listing.
            if by_sign {
                scan.rejected.push(point);
            }
            continue;
        }
        if cfg.confirm {
            let mut worst = 0.0f64;
            for c in p.kernel_vectors(ic.dim_ker) {
                let w0 = basis.synthesize(&c);
                let y = linearized(traj, &w0, t_star, Some(cfg.confirm_step.unwrap_or(traj.cadence)))?.y;
                worst = worst.max(y.h1_norm() / w0.h1_norm());
            }
            point.confirmation = Some(worst);
            if !(worst < cfg.confirm_tol) {
                scan.rejected.push(point);
                continue;
            }
        }
        scan.conjugate.push(point);
    }
    Ok(scan)
}
