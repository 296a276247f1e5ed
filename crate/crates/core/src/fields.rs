//! Divergence-free vector fields on the torus.
//!
//! A symplectic field is `v = J grad f + h` with `J(a, b) = (b, -a)`, so
//! `v = (f_y + h1, -f_x + h2)`. The stream `f` is stored spectrally with
//! zero mean and no Nyquist modes; `h` is the constant harmonic part.

use num_complex::Complex64;

use crate::error::{config, Result};
use crate::spectral::{inverse_pair, Grid2D, PhysicalField, SpectrumField, AREA};

/// Rotation by `-π/2`: `J(a, b) = (b, -a)`.
pub fn j_rot(a: [f64; 2]) -> [f64; 2] {
    [a[1], -a[0]]
}

/// Symplectic form `ω(a, b) = a1 b2 - a2 b1 = <a, J b>`.
pub fn omega(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Element of the Lie algebra: stream function plus harmonic part.
#[derive(Clone, Debug)]
pub struct SymplecticVectorField {
    stream: SpectrumField,
    harmonic: [f64; 2],
}

/// Ambient (not necessarily divergence-free) vector field, stored spectrally.
#[derive(Clone, Debug)]
pub struct VelocityField {
    pub u: [SpectrumField; 2],
}

impl SymplecticVectorField {
    /// Builds `J grad f + h`; the mean and Nyquist modes of `f` are discarded.
    pub fn new(mut stream: SpectrumField, harmonic: [f64; 2]) -> Self {
        stream.strip_nyquist();
        stream.coeffs_mut()[[0, 0]] = Complex64::new(0.0, 0.0);
        SymplecticVectorField { stream, harmonic }
    }

    pub fn zeros(grid: &Grid2D) -> Self {
        SymplecticVectorField { stream: SpectrumField::zeros(grid), harmonic: [0.0; 2] }
    }

    /// Stream given as `(k1, k2, a, b)` terms `a cos(k.x) + b sin(k.x)`.
    pub fn from_modes(grid: &Grid2D, modes: &[(i64, i64, f64, f64)], harmonic: [f64; 2]) -> Result<Self> {
        let h = (grid.n() / 2) as i64;
        if modes.iter().any(|m| m.0.abs() >= h || m.1.abs() >= h) {
            return config("stream mode outside the resolved band");
        }
        Ok(Self::new(SpectrumField::from_modes(grid, modes)?, harmonic))
    }

    /// Samples a stream function on the lattice.
    pub fn from_stream_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64, harmonic: [f64; 2]) -> Self {
        Self::new(PhysicalField::from_fn(grid, f).forward(), harmonic)
    }

    pub fn grid(&self) -> &Grid2D {
        self.stream.grid()
    }

    pub fn stream(&self) -> &SpectrumField {
        &self.stream
    }

    pub fn harmonic(&self) -> [f64; 2] {
        self.harmonic
    }

    /// Spectral velocity components.
    pub fn velocity(&self) -> VelocityField {
        let g = self.grid();
        let (n, ko) = (g.n(), g.k_odd());
        let f = self.stream.coeffs().as_slice().expect("standard layout");
        let mut u1 = SpectrumField::zeros(g);
        let mut u2 = SpectrumField::zeros(g);
        {
            let a = u1.coeffs_mut().as_slice_mut().expect("standard layout");
            for i in 0..n {
                for j in 0..n {
                    let c = f[i * n + j];
                    a[i * n + j] = Complex64::new(-ko[j] * c.im, ko[j] * c.re);
                }
            }
            let b = u2.coeffs_mut().as_slice_mut().expect("standard layout");
            for i in 0..n {
                for j in 0..n {
                    let c = f[i * n + j];
                    b[i * n + j] = Complex64::new(ko[i] * c.im, -ko[i] * c.re);
                }
            }
        }
        u1.coeffs_mut()[[0, 0]] = Complex64::new(self.harmonic[0], 0.0);
        u2.coeffs_mut()[[0, 0]] = Complex64::new(self.harmonic[1], 0.0);
        VelocityField { u: [u1, u2] }
    }

    /// Velocity components on the lattice.
    pub fn physical(&self) -> [PhysicalField; 2] {
        let g = self.grid();
        let mut p = crate::spectral::synthesize(g, 2, crate::lie::velocity_fill(g, std::slice::from_ref(&self)));
        let b = p.pop().expect("two fields");
        let a = p.pop().expect("two fields");
        [a, b]
    }

    pub fn scaled(&self, a: f64) -> Self {
        SymplecticVectorField {
            stream: self.stream.scaled(a),
            harmonic: [a * self.harmonic[0], a * self.harmonic[1]],
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.stream.axpy(a, &other.stream);
        self.harmonic[0] += a * other.harmonic[0];
        self.harmonic[1] += a * other.harmonic[1];
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.axpy(1.0, other);
        s
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.axpy(-1.0, other);
        s
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn h1_norm(&self) -> f64 {
        h1_inner(self, self).max(0.0).sqrt()
    }

    /// Largest pointwise speed on the lattice.
    pub fn vmax(&self) -> f64 {
        let [a, b] = self.physical();
        let m2 = a.values().iter().zip(b.values().iter()).fold(0.0f64, |m, (x, y)| m.max(x * x + y * y));
        m2.sqrt()
    }

    /// Moves to another grid (modes that do not fit are dropped).
    pub fn resample(&self, grid: &Grid2D) -> Self {
        Self::new(self.stream.resample(grid), self.harmonic)
    }

    pub fn is_finite(&self) -> bool {
        self.harmonic.iter().all(|h| h.is_finite()) && self.stream.coeffs().iter().all(|c| c.is_finite())
    }
}

impl VelocityField {
    pub fn zeros(grid: &Grid2D) -> Self {
        VelocityField { u: [SpectrumField::zeros(grid), SpectrumField::zeros(grid)] }
    }

    pub fn from_physical(a: &PhysicalField, b: &PhysicalField) -> Self {
        let (u1, u2) = crate::spectral::forward_pair(a, b);
        VelocityField { u: [u1, u2] }
    }

    pub fn grid(&self) -> &Grid2D {
        self.u[0].grid()
    }

    pub fn physical(&self) -> [PhysicalField; 2] {
        let (a, b) = inverse_pair(&self.u[0], &self.u[1]);
        [a, b]
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.u[0].axpy(a, &other.u[0]);
        self.u[1].axpy(a, &other.u[1]);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut s = self.clone();
        s.axpy(-1.0, other);
        s
    }

    /// `L^2` norm.
    pub fn l2_norm(&self) -> f64 {
        (AREA * (self.u[0].power() + self.u[1].power())).sqrt()
    }

    /// Ambient `H^1` norm `<(1 + Δ) u, u>^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        velocity_h1_inner(self, self).max(0.0).sqrt()
    }
}

/// `<u, v>_1 = <(1 + Δ) u, v>_{L^2}` for symplectic fields.
pub fn h1_inner(u: &SymplecticVectorField, v: &SymplecticVectorField) -> f64 {
    let g = u.grid();
    assert_eq!(g, v.grid(), "fields live on different grids");
    let s: f64 = u
        .stream
        .coeffs()
        .iter()
        .zip(v.stream.coeffs().iter())
        .zip(g.kk())
        .map(|((a, b), k2)| k2 * (1.0 + k2) * (a.re * b.re + a.im * b.im))
        .sum();
    AREA * (s + u.harmonic[0] * v.harmonic[0] + u.harmonic[1] * v.harmonic[1])
}

/// Ambient `H^1` pairing of two velocity fields.
pub fn velocity_h1_inner(u: &VelocityField, v: &VelocityField) -> f64 {
    let kk = u.grid().kk();
    let mut s = 0.0;
    for c in 0..2 {
        s += u.u[c]
            .coeffs()
            .iter()
            .zip(v.u[c].coeffs().iter())
            .zip(kk)
            .map(|((a, b), k2)| (1.0 + k2) * (a.re * b.re + a.im * b.im))
            .sum::<f64>();
    }
    AREA * s
}

/// `q = Δ(1 + Δ) f`, the transported scalar of the Euler-Arnold flow.
pub fn casimir_q(v: &SymplecticVectorField) -> SpectrumField {
    let g = v.grid().clone();
    let mut q = v.stream.clone();
    q.coeffs_mut().iter_mut().zip(g.kk()).for_each(|(c, k2)| *c *= k2 * (1.0 + k2));
    q
}

/// Inverts [`casimir_q`] (the harmonic part must be supplied separately).
pub fn from_casimir(q: &SpectrumField, harmonic: [f64; 2]) -> SymplecticVectorField {
    let g = q.grid().clone();
    let mut f = q.clone();
    f.coeffs_mut()
        .iter_mut()
        .zip(g.kk())
        .for_each(|(c, k2)| *c = if *k2 == 0.0 { Complex64::new(0.0, 0.0) } else { *c / (k2 * (1.0 + k2)) });
    SymplecticVectorField::new(f, harmonic)
}

/// Orthogonal projection onto symplectic fields (Hodge: drops the gradient part).
#[allow(non_snake_case)]
pub fn project_P(u: &VelocityField) -> SymplecticVectorField {
    project_scaled(&u.u[0], &u.u[1], 1.0, false, false)
}

/// `scale * P(u)`, optionally followed by `(1 + Δ)^{-1}` and dealiasing, in
/// one pass over the spectrum.
pub(crate) fn project_scaled(
    u1: &SpectrumField,
    u2: &SpectrumField,
    scale: f64,
    smooth: bool,
    dealias: bool,
) -> SymplecticVectorField {
    let g = u1.grid();
    let (n, ko, kk, keep) = (g.n(), g.k_odd(), g.kk(), g.keep_mask());
    let a = u1.coeffs().as_slice().expect("standard layout");
    let b = u2.coeffs().as_slice().expect("standard layout");
    let mut f = SpectrumField::zeros(g);
    let c = f.coeffs_mut().as_slice_mut().expect("standard layout");
    let h = n / 2;
    for i in (0..n).filter(|&i| i != h) {
        let k1 = ko[i];
        for j in (0..n).filter(|&j| j != h) {
            let p = i * n + j;
            let k2 = ko[j];
            let ks = k1 * k1 + k2 * k2;
            if ks > 0.0 && (!dealias || keep[p]) {
                let w = a[p] * k2 - b[p] * k1;
                let s = if smooth { scale / (ks * (1.0 + kk[p])) } else { scale / ks };
                c[p] = Complex64::new(w.im * s, -w.re * s);
            }
        }
    }
    let h = [scale * a[0].re, scale * b[0].re];
    SymplecticVectorField { stream: f, harmonic: h }
}

/// [`project_P`] together with the relative `L^2` size of the discarded part.
pub fn project_with_residual(u: &VelocityField) -> (SymplecticVectorField, f64) {
    let p = project_P(u);
    let norm = u.l2_norm();
    let res = if norm == 0.0 { 0.0 } else { u.sub(&p.velocity()).l2_norm() / norm };
    (p, res)
}

/// `(1 + Δ)^{-1}` applied to a symplectic field.
pub fn helmholtz_inv(v: &SymplecticVectorField) -> SymplecticVectorField {
    SymplecticVectorField {
        stream: v.stream.apply(crate::spectral::Multiplier::HelmholtzInv),
        harmonic: v.harmonic,
    }
}

/// `(1 + Δ)` applied to a symplectic field.
pub fn helmholtz(v: &SymplecticVectorField) -> SymplecticVectorField {
    SymplecticVectorField {
        stream: v.stream.apply(crate::spectral::Multiplier::Helmholtz),
        harmonic: v.harmonic,
    }
}

/// Pointwise `ω(a, b)` of two fields on the lattice.
pub fn omega_field(a: &[PhysicalField; 2], b: &[PhysicalField; 2]) -> PhysicalField {
    let mut out = a[0].mul(&b[1]);
    *out.values_mut() -= &a[1].mul(&b[0]).into_values();
    out
}
