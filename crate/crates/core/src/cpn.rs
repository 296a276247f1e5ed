//! A two-parameter family of isometries of `CP^n` given by unitary matrices,
//! `γ(s, t) = A(s) B(t) A(s)^{-1}`, whose variation field vanishes at `t = 0`
//! and `t = 2π`, together with the flat-torus instance of Killing fields
//! generating stationary geodesics.
//!
//! `A` and `B` are block diagonal in the 2x2 rotation
//! `[[i cos x, sin x], [sin x, i cos x]]`. For even `n`, `A = diag(i, R, .., R)`
//! and `B = diag(R, .., R, i)`; for odd `n`, `A = diag(i, R, .., R, i)` and
//! `B = diag(R, .., R, i, i)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::SymplecticVectorField;
use crate::flow::FlowMap;
use crate::geodesic::{rhs_direct, solve_geodesic, SolverConfig};
use crate::report::Check;
use crate::spectral::Grid2D;

pub type CMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Tolerance on `v + v^*` for a velocity sample.
pub const SKEW_TOL: f64 = 1e-12;

/// Block layout of `A(s)` and `B(t)` for a given `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnitaryPath {
    n: usize,
}

/// `[[i cos x, sin x], [sin x, i cos x]]` (`order = 0`) or its derivative.
fn rotation(x: f64, order: u8) -> [[Complex64; 2]; 2] {
    let (s, c) = x.sin_cos();
    match order {
        0 => [[I * c, s.into()], [s.into(), I * c]],
        _ => [[-I * s, c.into()], [c.into(), -I * s]],
    }
}

/// `scalar * I` of size `dim` with `blocks` copies of `r` on the diagonal
/// starting at row `first`.
fn assemble(dim: usize, first: usize, blocks: usize, r: [[Complex64; 2]; 2], scalar: Complex64) -> CMatrix {
    let mut m = CMatrix::from_diagonal_element(dim, dim, scalar);
    for b in 0..blocks {
        let o = first + 2 * b;
        for (i, row) in r.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                m[(o + i, o + j)] = *x;
            }
        }
    }
    m
}

impl UnitaryPath {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("CP^n needs n >= 2, got {n}")));
        }
        Ok(UnitaryPath { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Matrix size `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// Number of rotation blocks in each factor.
    fn blocks(&self) -> usize {
        self.n / 2
    }

    /// `d^order A / ds^order` for `order` in `{0, 1}`.
    fn a_deriv(&self, s: f64, order: u8) -> CMatrix {
        let scalar = if order == 0 { I } else { Complex64::new(0.0, 0.0) };
        assemble(self.dim(), 1, self.blocks(), rotation(s, order), scalar)
    }

    fn b_deriv(&self, t: f64, order: u8) -> CMatrix {
        let scalar = if order == 0 { I } else { Complex64::new(0.0, 0.0) };
        assemble(self.dim(), 0, self.blocks(), rotation(t, order), scalar)
    }

    pub fn a(&self, s: f64) -> CMatrix {
        self.a_deriv(s, 0)
    }

    pub fn b(&self, t: f64) -> CMatrix {
        self.b_deriv(t, 0)
    }

    pub fn gamma(&self, s: f64, t: f64) -> CMatrix {
        let a = self.a(s);
        &a * self.b(t) * a.adjoint()
    }

    /// `∂_t γ = A B' A^{-1}`.
    pub fn gamma_t(&self, s: f64, t: f64) -> CMatrix {
        let a = self.a(s);
        &a * self.b_deriv(t, 1) * a.adjoint()
    }

    /// `∂_s γ = A' B A^{-1} - A B A^{-1} A' A^{-1}`.
    pub fn gamma_s(&self, s: f64, t: f64) -> CMatrix {
        let a = self.a(s);
        let ai = a.adjoint();
        let da = self.a_deriv(s, 1);
        let b = self.b(t);
        &da * &b * &ai - &a * &b * &ai * &da * &ai
    }
}

/// `v(s, t) = ∂_t γ γ^{-1}`, checked to be skew-Hermitian.
pub fn velocity_field(path: &UnitaryPath, s: f64, t: f64) -> Result<CMatrix> {
    let v = path.gamma_t(s, t) * path.gamma(s, t).adjoint();
    let skew = skew_defect(&v);
    if skew > SKEW_TOL {
        return Err(Error::Numerical(format!("velocity at (s, t) = ({s}, {t}) is not skew-Hermitian: {skew:e}")));
    }
    Ok(v)
}

/// Variation field `J(t) = ∂_s γ(s, t)` at `s = 0`.
pub fn variation_field(path: &UnitaryPath, t: f64) -> CMatrix {
    path.gamma_s(0.0, t)
}

/// Central difference of `γ` in `s` at `s = 0`.
pub fn variation_fd(path: &UnitaryPath, t: f64, eps: f64) -> CMatrix {
    (path.gamma(eps, t) - path.gamma(-eps, t)) / Complex64::new(2.0 * eps, 0.0)
}

/// `‖v + v^*‖_F`.
pub fn skew_defect(v: &CMatrix) -> f64 {
    (v + v.adjoint()).norm()
}

/// `‖U^* U - I‖_F`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    (u.adjoint() * u - CMatrix::identity(u.nrows(), u.ncols())).norm()
}

/// `min_θ ‖a - e^{iθ} b‖_F`: distance between the classes of `a` and `b`
/// modulo the centre `e^{iθ} I`.
pub fn projective_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let inner: Complex64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
    (a - b * phase).norm()
}

/// The printed block-tridiagonal variation field: 2x2 blocks `D1` on the
/// super-diagonal and `-D1` below, with `D2` in the last off-diagonal pair,
/// truncated to the `(n + 1) x (n + 1)` matrix.
pub fn printed_variation(n: usize, t: f64) -> CMatrix {
    let dim = n + 1;
    let blocks = dim.div_ceil(2);
    let full = 2 * blocks;
    let (s, c) = t.sin_cos();
    let d1 = [Complex64::new(-s, 0.0), Complex64::new(s, 0.0)];
    let d2 = [Complex64::new(-s, 0.0), I * (1.0 - c)];
    let mut m = CMatrix::zeros(full, full);
    for b in 0..blocks.saturating_sub(1) {
        let d = if b + 2 == blocks { d2 } else { d1 };
        for (k, x) in d.iter().enumerate() {
            m[(2 * b + k, 2 * b + 2 + k)] = *x;
            m[(2 * b + 2 + k, 2 * b + k)] = -*x;
        }
    }
    m.view((0, 0), (dim, dim)).into_owned()
}

/// Relative residual of the best fit `J ≈ a P + c γ(0, t)` with complex
/// `a`, `c`, where `P` is the printed form. Returns `(residual, a)`.
pub fn printed_form_residual(path: &UnitaryPath, t: f64) -> (f64, Complex64) {
    let j = variation_field(path, t);
    let p = printed_variation(path.n(), t);
    let g = path.gamma(0.0, t);
    let cols = [p, g];
    let flat = |m: &CMatrix| m.iter().copied().collect::<Vec<_>>();
    let a = DMatrix::from_fn(j.len(), 2, |r, c| flat(&cols[c])[r]);
    let rhs = nalgebra::DVector::from_vec(flat(&j));
    let scale = rhs.norm();
    if scale == 0.0 {
        return (0.0, Complex64::new(0.0, 0.0));
    }
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&rhs, 1e-14).expect("both factors requested");
    ((&a * &coef - &rhs).norm() / scale, coef[0])
}

/// `‖rhs_direct(h)‖_{H^1}` for the constant field `h`: a Killing field of the
/// flat torus, hence a stationary solution.
pub fn killing_stationarity_torus(grid: &Grid2D, h: [f64; 2]) -> Result<f64> {
    let v = SymplecticVectorField::from_modes(grid, &[], h)?;
    Ok(rhs_direct(&v).h1_norm())
}

/// Integrates the geodesic from the constant field `h` to `t_end` and
/// returns `(‖v(t) - h‖_{H^1}, max |η(t)(x) - x - t h|)`: the flow of a
/// Killing field is a rigid translation.
pub fn killing_geodesic(grid: &Grid2D, h: [f64; 2], t_end: f64, dt: f64) -> Result<(f64, f64)> {
    let v0 = SymplecticVectorField::from_modes(grid, &[], h)?;
    let run = solve_geodesic(&v0, &SolverConfig::new(dt, t_end).with_tracers(grid.n()))?.into_result()?;
    let s = &run.final_state;
    let eta = s.eta.as_ref().expect("tracers were requested");
    let exact = FlowMap::translation(grid, h, s.t);
    let shift = eta
        .positions()
        .iter()
        .zip(exact.positions())
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max);
    Ok((s.v.sub(&v0).h1_norm(), shift))
}

/// Deterministic sample points in `[0, 2π)^2` (a Weyl sequence).
fn samples(count: usize) -> impl Iterator<Item = (f64, f64)> {
    let tau = 2.0 * std::f64::consts::PI;
    let (a1, a2) = (0.754_877_666_246_692_7, 0.569_840_290_998_053_3);
    (1..=count).map(move |k| (tau * (k as f64 * a1).fract(), tau * (k as f64 * a2).fract()))
}

/// The full set of matrix-level checks for one `n`.
pub fn verify(n: usize) -> Result<Vec<Check>> {
    let path = UnitaryPath::new(n)?;
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = Vec::new();
    let norm = |t: f64| variation_field(&path, t).norm();
    out.push(Check::below("J(0)", norm(0.0), 0.0));
    out.push(Check::below("J(2pi)", norm(tau), 1e-12));
    out.push(Check::above("J(pi)", norm(std::f64::consts::PI), 0.1));
    let mut skew: f64 = 0.0;
    let mut unitary: f64 = 0.0;
    for (s, t) in samples(100) {
        let v = path.gamma_t(s, t) * path.gamma(s, t).adjoint();
        skew = skew.max(skew_defect(&v));
        unitary = unitary.max(unitarity_defect(&path.gamma(s, t)));
    }
    out.push(Check::below("velocity_skew_hermitian", skew, SKEW_TOL));
    out.push(Check::below("gamma_unitary", unitary, 1e-13));
    let identity = CMatrix::identity(path.dim(), path.dim());
    let start = (0..=100).map(|k| projective_distance(&path.gamma(tau * k as f64 / 100.0, 0.0), &identity)).fold(0.0, f64::max);
    out.push(Check::below("gamma_at_t0_is_identity", start, 1e-13));
    let fd = (0..=20)
        .map(|k| {
            let t = tau * k as f64 / 20.0;
            (variation_field(&path, t) - variation_fd(&path, t, 1e-5)).norm()
        })
        .fold(0.0, f64::max);
    out.push(Check::below("J_vs_finite_difference", fd, 1e-9));
    // No interior zero at a sampling resolution of 1e-3.
    let samples = (tau / 1e-3).ceil() as usize;
    let interior_min = (1..samples).map(|k| norm(tau * k as f64 / samples as f64)).fold(f64::INFINITY, f64::min);
    out.push(Check::above("J_interior_min", interior_min, 1e-12));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn layouts_match_block_form() {
        let p = UnitaryPath::new(2).unwrap();
        let a = p.a(0.7);
        assert_eq!(a[(0, 0)], I);
        assert_eq!(a[(1, 2)], c(0.7f64.sin(), 0.0));
        assert_eq!(a[(2, 2)], I * 0.7f64.cos());
        let b = p.b(0.3);
        assert_eq!(b[(2, 2)], I);
        assert_eq!(b[(0, 1)], c(0.3f64.sin(), 0.0));
        let p3 = UnitaryPath::new(3).unwrap();
        assert_eq!(p3.a(0.5)[(3, 3)], I);
        assert_eq!(p3.b(0.5)[(2, 2)], I);
        assert_eq!(p3.b(0.5)[(2, 3)], c(0.0, 0.0));
        assert!(UnitaryPath::new(1).is_err());
    }

    #[test]
    fn a_at_zero_is_scalar() {
        for n in 2..6 {
            let p = UnitaryPath::new(n).unwrap();
            let d = p.a(0.0) - CMatrix::identity(n + 1, n + 1) * I;
            assert_eq!(d.norm(), 0.0);
        }
    }

    #[test]
    fn unitary_at_sample() {
        let p = UnitaryPath::new(4).unwrap();
        assert!(unitarity_defect(&p.a(0.7)) < 1e-15);
        assert!(unitarity_defect(&p.gamma(0.7, 2.1)) < 1e-14);
    }

    /// At `s = 0`, `v = B' B^{-1}`, block diagonal with generator
    /// `[[0, -i], [-i, 0]]` and a zero scalar slot.
    #[test]
    fn velocity_at_s_zero() {
        let p = UnitaryPath::new(2).unwrap();
        let v = velocity_field(&p, 0.0, 1.3).unwrap();
        let mut expect = CMatrix::zeros(3, 3);
        expect[(0, 1)] = -I;
        expect[(1, 0)] = -I;
        assert!((v - expect).norm() < 1e-15);
    }

    /// `J(t) = i (B(t) A'(0) - A'(0) B(t))`; for `n = 2`, `‖J‖ = 2√2 |sin(t/2)|`.
    #[test]
    fn variation_norm_closed_form() {
        let p = UnitaryPath::new(2).unwrap();
        for t in [0.3f64, 1.0, 2.5, 4.0] {
            let expect = 2.0 * 2f64.sqrt() * (t / 2.0).sin().abs();
            assert!((variation_field(&p, t).norm() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn projective_distance_ignores_phase() {
        let p = UnitaryPath::new(3).unwrap();
        let g = p.gamma(0.4, 1.1);
        let rotated = &g * c(0.3f64.cos(), 0.3f64.sin());
        assert!(projective_distance(&g, &rotated) < 1e-14);
        assert!(projective_distance(&g, &p.gamma(0.4, 1.2)) > 1e-3);
    }

    #[test]
    fn printed_form_has_square_size() {
        for n in [2, 3, 4, 5] {
            assert_eq!(printed_variation(n, 1.0).nrows(), n + 1);
        }
        let (r, _) = printed_form_residual(&UnitaryPath::new(2).unwrap(), 0.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn all_checks_pass() {
        for n in [2, 3, 4] {
            for check in verify(n).unwrap() {
                assert!(check.passed(), "n = {n}: {check:?}");
            }
        }
    }

    #[test]
    fn constant_field_is_stationary() {
        let g = Grid2D::new(16).unwrap();
        assert!(killing_stationarity_torus(&g, [1.0, 0.0]).unwrap() < 1e-13);
        assert_eq!(killing_stationarity_torus(&g, [0.0, 0.0]).unwrap(), 0.0);
        let (dv, shift) = killing_geodesic(&g, [0.3, -0.7], 5.0, 0.05).unwrap();
        assert!(dv < 1e-10 && shift < 1e-10, "{dv} {shift}");
    }
}
