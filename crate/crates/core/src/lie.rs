//! Lie-algebra operators for the right-invariant `H^1` metric.
//!
//! `ad_v u = J grad ω(v, u)` (the negative of the vector-field bracket),
//! `ad*_v` is its `H^1` adjoint and `K_v w = ad*_w v`. Every quadratic
//! product is formed on the lattice and dealiased.

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::fields::{casimir_q, SymplecticVectorField};
use crate::geodesic::smooth_project;
use crate::spectral::{synthesize, Grid2D, PhysicalField, SpectrumField};

/// `ad_v u = J grad ω(v, u)`; the harmonic part of the result is zero.
pub fn ad(v: &SymplecticVectorField, u: &SymplecticVectorField) -> SymplecticVectorField {
    let g = v.grid();
    let p = synthesize(g, 4, velocity_fill(g, &[v, u]));
    let mut w = Array2::zeros((g.n(), g.n()));
    Zip::from(&mut w)
        .and(p[0].values())
        .and(p[1].values())
        .and(p[2].values())
        .and(p[3].values())
        .for_each(|w, &v1, &v2, &u1, &u2| *w = v1 * u2 - v2 * u1);
    let mut s = PhysicalField::from_raw(g, w).forward();
    s.dealias();
    SymplecticVectorField::new(s, [0.0, 0.0])
}

/// Fill closure for [`synthesize`] producing the two velocity components of
/// each field in turn.
pub(crate) fn velocity_fill<'a>(
    g: &'a Grid2D,
    fields: &'a [&'a SymplecticVectorField],
) -> impl Fn(usize, usize, &mut [Complex64]) + 'a {
    let n = g.n();
    let ko = g.k_odd();
    move |i, j, out| {
        let s = i * n + j;
        for (c, f) in fields.iter().enumerate() {
            let x = f.stream().coeffs().as_slice().expect("standard layout")[s];
            out[2 * c] = Complex64::new(-ko[j] * x.im, ko[j] * x.re);
            out[2 * c + 1] = Complex64::new(ko[i] * x.im, -ko[i] * x.re);
            if s == 0 {
                out[2 * c].re += f.harmonic()[0];
                out[2 * c + 1].re += f.harmonic()[1];
            }
        }
    }
}

/// `ad*_v w = -(1 + Δ)^{-1} P(q_w J v)` with `q_w = Δ(1 + Δ) g_w`.
///
/// Characterized by `<ad*_v w, x>_1 = <w, ad_v x>_1` for all `x`.
pub fn ad_star(v: &SymplecticVectorField, w: &SymplecticVectorField) -> SymplecticVectorField {
    let q = casimir_q(w);
    ad_star_from_q(v, &q)
}

/// [`ad_star`] with `q_w` already available.
pub(crate) fn ad_star_from_q(v: &SymplecticVectorField, q: &SpectrumField) -> SymplecticVectorField {
    let g = v.grid();
    let vel = velocity_fill(g, std::slice::from_ref(&v));
    let qc = q.coeffs().as_slice().expect("standard layout");
    let n = g.n();
    let p = synthesize(g, 3, |i, j, out| {
        vel(i, j, &mut out[..2]);
        out[2] = qc[i * n + j];
    });
    let (v1, v2, qp) = (p[0].values(), p[1].values(), p[2].values());
    // q J v = (q v2, -q v1)
    smooth_project(g, qp * v2, -(qp * v1), -1.0, true)
}

/// `K_v w = ad*_w v`.
pub fn k_op(v: &SymplecticVectorField, w: &SymplecticVectorField) -> SymplecticVectorField {
    ad_star(w, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::h1_inner;
    use crate::spectral::Grid2D;

    fn fields(g: &Grid2D) -> [SymplecticVectorField; 3] {
        [
            SymplecticVectorField::from_modes(g, &[(1, 0, 1.0, 0.0), (1, 2, 0.3, -0.2)], [0.1, 0.4]).unwrap(),
            SymplecticVectorField::from_modes(g, &[(0, 1, 0.5, 0.5), (-2, 1, 0.0, 1.0), (3, 3, 0.1, 0.0)], [-0.3, 0.2])
                .unwrap(),
            SymplecticVectorField::from_modes(g, &[(2, 0, 0.7, 0.0), (1, -1, 0.2, 0.9)], [0.5, 0.0]).unwrap(),
        ]
    }

    /// `ad_v u = -[v, u]` with `[v, u] = (v.grad) u - (u.grad) v`, checked on the lattice.
    #[test]
    fn ad_is_minus_bracket() {
        use crate::spectral::{Axis, Multiplier};
        let g = Grid2D::new(32).unwrap();
        let [v, u, _] = fields(&g);
        let a = ad(&v, &u);
        let grad = |s: &SpectrumField, ax| s.apply(Multiplier::Grad(ax)).inverse();
        let (vv, uv) = (v.velocity(), u.velocity());
        let [v1, v2] = v.physical();
        let [u1, u2] = u.physical();
        let av = a.physical();
        for c in 0..2 {
            // [v, u] = (v.grad) u - (u.grad) v
            let vgu = v1.mul(&grad(&uv.u[c], Axis::X)).values() + v2.mul(&grad(&uv.u[c], Axis::Y)).values();
            let ugv = u1.mul(&grad(&vv.u[c], Axis::X)).values() + u2.mul(&grad(&vv.u[c], Axis::Y)).values();
            let bracket = &vgu - &ugv;
            let err = (&bracket + av[c].values()).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(err < 1e-12, "component {c}: {err}");
        }
    }

    #[test]
    fn coadjoint_is_adjoint() {
        let g = Grid2D::new(32).unwrap();
        let [v, w, x] = fields(&g);
        let lhs = h1_inner(&ad_star(&v, &w), &x);
        let rhs = h1_inner(&w, &ad(&v, &x));
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        let lhs = h1_inner(&k_op(&v, &w), &x);
        let rhs = h1_inner(&v, &ad(&w, &x));
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn ad_antisymmetric_and_harmonic_free() {
        let g = Grid2D::new(16).unwrap();
        let [v, u, _] = fields(&g);
        let s = ad(&v, &u).add(&ad(&u, &v));
        assert!(s.h1_norm() < 1e-13);
        assert_eq!(ad(&v, &u).harmonic(), [0.0, 0.0]);
        assert!(ad(&v, &v).h1_norm() < 1e-13);
    }
}
