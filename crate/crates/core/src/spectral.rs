//! Pseudo-spectral machinery on the 2π-periodic square.
//!
//! Wavenumber layout: array index `i` stores `k = i` for `i < n/2` and
//! `k = i - n` otherwise, so the Nyquist index `n/2` carries `k = -n/2`.
//! The first array axis is `x` (`k1`), the second is `y` (`k2`).
//!
//! `forward` is `fft2 / n^2` and `inverse` is the unnormalized inverse, so
//! coefficient `(0, 0)` is the lattice mean.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{config, Result};
use crate::exec::Execution;
use crate::nufft::Spreader;

pub const TWO_PI: f64 = 2.0 * PI;
/// Area of the torus.
pub const AREA: f64 = TWO_PI * TWO_PI;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Coordinate direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Square `n x n` lattice on `[0, 2π)^2` with cached FFT plans.
#[derive(Clone)]
pub struct Grid2D {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `k` per index, Nyquist as `-n/2`.
    k: Arc<Vec<f64>>,
    /// `k` per index with the Nyquist entry zeroed (odd-order symbols).
    k_odd: Arc<Vec<f64>>,
    /// `|k|^2` per flat index.
    kk: Arc<Vec<f64>>,
    /// Dealiasing mask per flat index.
    keep: Arc<Vec<bool>>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid2D({})", self.n)
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl Grid2D {
    /// `n` must be even and at least 8.
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return config(format!("grid size must be even and >= 8, got {n}"));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k: Vec<f64> = (0..n).map(|i| wavenumber(n, i) as f64).collect();
        let mut k_odd = k.clone();
        k_odd[n / 2] = 0.0;
        let kk = (0..n * n).map(|p| k[p / n] * k[p / n] + k[p % n] * k[p % n]).collect();
        let keep = (0..n * n)
            .map(|p| 3 * wavenumber(n, p / n).unsigned_abs().max(wavenumber(n, p % n).unsigned_abs()) < n as u64)
            .collect();
        Ok(Grid2D { n, fwd, inv, k: Arc::new(k), k_odd: Arc::new(k_odd), kk: Arc::new(kk), keep: Arc::new(keep) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        TWO_PI / self.n as f64
    }

    /// Lattice coordinate of index `i`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Signed wavenumber stored at index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        wavenumber(self.n, i)
    }

    /// Array index of wavenumber `k`, if representable.
    pub fn index(&self, k: i64) -> Option<usize> {
        let h = (self.n / 2) as i64;
        if k >= -h && k < h {
            Some(k.rem_euclid(self.n as i64) as usize)
        } else {
            None
        }
    }

    /// Index of `-k` given the index of `k`.
    pub fn neg_index(&self, i: usize) -> usize {
        (self.n - i) % self.n
    }

    /// Largest `|k|_inf` kept by [`SpectrumField::dealias`].
    pub fn dealias_band(&self) -> usize {
        (self.n - 1) / 3
    }

    /// Whether wavevector `(k1, k2)` survives dealiasing.
    pub fn keeps(&self, k1: i64, k2: i64) -> bool {
        3 * k1.unsigned_abs().max(k2.unsigned_abs()) < self.n as u64
    }

    pub(crate) fn k(&self) -> &[f64] {
        &self.k
    }

    pub(crate) fn k_odd(&self) -> &[f64] {
        &self.k_odd
    }

    pub(crate) fn kk(&self) -> &[f64] {
        &self.kk
    }

    pub(crate) fn keep_mask(&self) -> &[bool] {
        &self.keep
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }
}

fn wavenumber(n: usize, i: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn transpose(a: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            a.swap(i * n + j, j * n + i);
        }
    }
}

fn check_same(a: &Grid2D, b: &Grid2D) {
    assert_eq!(a.n, b.n, "fields live on different grids");
}

/// Real samples on the lattice.
#[derive(Clone, Debug)]
pub struct PhysicalField {
    grid: Grid2D,
    values: Array2<f64>,
}

impl PhysicalField {
    pub fn zeros(grid: &Grid2D) -> Self {
        PhysicalField { grid: grid.clone(), values: Array2::zeros((grid.n, grid.n)) }
    }

    /// Samples `f(x, y)` at the lattice nodes.
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = grid.spacing();
        let values = Array2::from_shape_fn((grid.n, grid.n), |(i, j)| f(i as f64 * h, j as f64 * h));
        PhysicalField { grid: grid.clone(), values }
    }

    pub fn from_array(grid: &Grid2D, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.n, grid.n) {
            return config(format!("array shape {:?} does not match grid {}", values.dim(), grid.n));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Numerical("non-finite sample".into()));
        }
        Ok(PhysicalField { grid: grid.clone(), values })
    }

    /// Wraps lattice values without validation (non-finite values propagate).
    pub(crate) fn from_raw(grid: &Grid2D, values: Array2<f64>) -> Self {
        PhysicalField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn forward(&self) -> SpectrumField {
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.grid.fft2(&mut buf, false);
        let s = 1.0 / (self.grid.n * self.grid.n) as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        SpectrumField { grid: self.grid.clone(), coeffs: from_vec(self.grid.n, buf) }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &PhysicalField) -> PhysicalField {
        check_same(&self.grid, &other.grid);
        PhysicalField { grid: self.grid.clone(), values: &self.values * &other.values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }

    /// `L^2(T^2)` norm by the lattice rule.
    pub fn l2_norm(&self) -> f64 {
        (AREA * self.values.iter().map(|v| v * v).sum::<f64>() / (self.grid.n * self.grid.n) as f64).sqrt()
    }
}

fn from_vec(n: usize, v: Vec<Complex64>) -> Array2<Complex64> {
    Array2::from_shape_vec((n, n), v).expect("square buffer")
}

/// Fourier multipliers used throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Multiplier {
    /// Positive Laplacian `|k|^2`.
    LapPos,
    /// `1 + |k|^2`.
    Helmholtz,
    /// `1 / (1 + |k|^2)`.
    HelmholtzInv,
    /// `1 / |k|^2`, zero on the mean.
    LapPosInv,
    /// `i k_axis`, zero at Nyquist.
    Grad(Axis),
}

/// Fourier coefficients of a real field on a [`Grid2D`].
#[derive(Clone, Debug)]
pub struct SpectrumField {
    grid: Grid2D,
    coeffs: Array2<Complex64>,
}

impl SpectrumField {
    pub fn zeros(grid: &Grid2D) -> Self {
        SpectrumField { grid: grid.clone(), coeffs: Array2::zeros((grid.n, grid.n)) }
    }

    /// Sum of `a cos(k.x) + b sin(k.x)` terms given as `(k1, k2, a, b)`.
    pub fn from_modes(grid: &Grid2D, modes: &[(i64, i64, f64, f64)]) -> Result<Self> {
        let mut s = SpectrumField::zeros(grid);
        let h = (grid.n / 2) as i64;
        for &(k1, k2, a, b) in modes {
            if k1.abs() >= h || k2.abs() >= h {
                return config(format!("mode ({k1}, {k2}) is not resolved on an n = {} grid", grid.n));
            }
            if k1 == 0 && k2 == 0 {
                s.coeffs[[0, 0]] += Complex64::new(a, 0.0);
                continue;
            }
            let (i1, i2) = (grid.index(k1).unwrap(), grid.index(k2).unwrap());
            let (j1, j2) = (grid.neg_index(i1), grid.neg_index(i2));
            s.coeffs[[i1, i2]] += Complex64::new(a / 2.0, -b / 2.0);
            s.coeffs[[j1, j2]] += Complex64::new(a / 2.0, b / 2.0);
        }
        Ok(s)
    }

    pub fn from_array(grid: &Grid2D, coeffs: Array2<Complex64>) -> Result<Self> {
        if coeffs.dim() != (grid.n, grid.n) {
            return config(format!("array shape {:?} does not match grid {}", coeffs.dim(), grid.n));
        }
        Ok(SpectrumField { grid: grid.clone(), coeffs })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array2<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.coeffs
    }

    /// Coefficient of `exp(i(k1 x + k2 y))`; zero if not representable.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        match (self.grid.index(k1), self.grid.index(k2)) {
            (Some(i), Some(j)) => self.coeffs[[i, j]],
            _ => ZERO,
        }
    }

    pub fn inverse(&self) -> PhysicalField {
        let mut buf: Vec<Complex64> = self.coeffs.iter().copied().collect();
        self.grid.fft2(&mut buf, true);
        let values = Array2::from_shape_vec((self.grid.n, self.grid.n), buf.iter().map(|c| c.re).collect())
            .expect("square buffer");
        PhysicalField { grid: self.grid.clone(), values }
    }

    /// Multiplies by the symbol `f(k1, k2)`.
    pub fn map_k(&self, f: impl Fn(f64, f64) -> Complex64) -> SpectrumField {
        let k = self.grid.k();
        let mut out = self.coeffs.clone();
        for ((i, j), c) in out.indexed_iter_mut() {
            *c *= f(k[i], k[j]);
        }
        SpectrumField { grid: self.grid.clone(), coeffs: out }
    }

    pub fn apply(&self, m: Multiplier) -> SpectrumField {
        let g = &self.grid;
        let n = g.n;
        let (kk, ko) = (g.kk(), g.k_odd());
        let mut out = self.coeffs.clone();
        let c = out.as_slice_mut().expect("standard layout");
        match m {
            Multiplier::LapPos => c.iter_mut().zip(kk).for_each(|(c, k)| *c *= k),
            Multiplier::Helmholtz => c.iter_mut().zip(kk).for_each(|(c, k)| *c *= 1.0 + k),
            Multiplier::HelmholtzInv => c.iter_mut().zip(kk).for_each(|(c, k)| *c /= 1.0 + k),
            Multiplier::LapPosInv => c.iter_mut().zip(kk).for_each(|(c, k)| *c = if *k == 0.0 { ZERO } else { *c / k }),
            Multiplier::Grad(ax) => {
                for i in 0..n {
                    for j in 0..n {
                        let k = if ax == Axis::X { ko[i] } else { ko[j] };
                        let z = &mut c[i * n + j];
                        *z = Complex64::new(-k * z.im, k * z.re);
                    }
                }
            }
        }
        SpectrumField { grid: self.grid.clone(), coeffs: out }
    }

    /// Zeroes every coefficient with `3 max(|k1|, |k2|) >= n`.
    pub fn dealias(&mut self) {
        let keep = self.grid.keep.clone();
        let c = self.coeffs.as_slice_mut().expect("standard layout");
        c.iter_mut().zip(keep.iter()).for_each(|(c, k)| {
            if !k {
                *c = ZERO
            }
        });
    }

    pub fn dealiased(&self) -> SpectrumField {
        let mut s = self.clone();
        s.dealias();
        s
    }

    /// Zeroes the Nyquist row and column.
    pub fn strip_nyquist(&mut self) {
        let h = self.grid.n / 2;
        self.coeffs.row_mut(h).fill(ZERO);
        self.coeffs.column_mut(h).fill(ZERO);
    }

    /// Largest `|k|_inf` over exactly nonzero coefficients (Nyquist counts as `n/2`).
    pub fn max_mode(&self) -> usize {
        let g = &self.grid;
        let mut m = 0;
        for ((i, j), c) in self.coeffs.indexed_iter() {
            if *c != ZERO {
                m = m.max(g.wavenumber(i).unsigned_abs().max(g.wavenumber(j).unsigned_abs()) as usize);
            }
        }
        m
    }

    /// True if no coefficient is removed by [`SpectrumField::dealias`].
    pub fn is_dealiased(&self) -> bool {
        self.coeffs.iter().zip(self.grid.keep.iter()).all(|(c, k)| *k || *c == ZERO)
    }

    /// Transfers to another grid, dropping unrepresentable modes and the target Nyquist.
    pub fn resample(&self, grid: &Grid2D) -> SpectrumField {
        if *grid == self.grid {
            return self.clone();
        }
        let mut out = SpectrumField::zeros(grid);
        let h = (grid.n / 2) as i64;
        let g = &self.grid;
        for ((i, j), c) in self.coeffs.indexed_iter() {
            let (k1, k2) = (g.wavenumber(i), g.wavenumber(j));
            if k1.abs() < h && k2.abs() < h && !(2 * k1.abs() == g.n as i64 || 2 * k2.abs() == g.n as i64) {
                out.coeffs[[grid.index(k1).unwrap(), grid.index(k2).unwrap()]] = *c;
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> SpectrumField {
        SpectrumField { grid: self.grid.clone(), coeffs: &self.coeffs * Complex64::new(a, 0.0) }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectrumField) {
        check_same(&self.grid, &other.grid);
        Zip::from(&mut self.coeffs).and(&other.coeffs).for_each(|s, o| *s += o * a);
    }

    pub fn add(&self, other: &SpectrumField) -> SpectrumField {
        let mut s = self.clone();
        s.axpy(1.0, other);
        s
    }

    pub fn sub(&self, other: &SpectrumField) -> SpectrumField {
        let mut s = self.clone();
        s.axpy(-1.0, other);
        s
    }

    /// `sum |c|^2`, i.e. the lattice mean of the squared field.
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()))
    }

    /// Evaluates the trigonometric interpolant at arbitrary points.
    pub fn interpolate(&self, points: &[[f64; 2]]) -> Vec<f64> {
        Interpolator::new(&[(self, [0, 0])]).eval(points).pop().unwrap()
    }
}

/// Transforms two real fields with one complex FFT.
pub fn forward_pair(a: &PhysicalField, b: &PhysicalField) -> (SpectrumField, SpectrumField) {
    check_same(&a.grid, &b.grid);
    let g = &a.grid;
    let n = g.n;
    let mut buf: Vec<Complex64> =
        a.values.iter().zip(b.values.iter()).map(|(&x, &y)| Complex64::new(x, y)).collect();
    g.fft2(&mut buf, false);
    let s = 1.0 / (n * n) as f64;
    let mut ca = Vec::with_capacity(n * n);
    let mut cb = Vec::with_capacity(n * n);
    for i in 0..n {
        let ni = g.neg_index(i);
        for j in 0..n {
            let z = buf[i * n + j];
            let zc = buf[ni * n + g.neg_index(j)].conj();
            ca.push((z + zc) * (0.5 * s));
            cb.push((z - zc) * Complex64::new(0.0, -0.5 * s));
        }
    }
    (
        SpectrumField { grid: g.clone(), coeffs: from_vec(n, ca) },
        SpectrumField { grid: g.clone(), coeffs: from_vec(n, cb) },
    )
}

/// Inverse transform of two Hermitian spectra with one complex FFT.
pub fn inverse_pair(a: &SpectrumField, b: &SpectrumField) -> (PhysicalField, PhysicalField) {
    check_same(&a.grid, &b.grid);
    let g = &a.grid;
    let n = g.n;
    let mut buf: Vec<Complex64> = a
        .coeffs
        .iter()
        .zip(b.coeffs.iter())
        .map(|(&x, &y)| x + Complex64::new(-y.im, y.re))
        .collect();
    g.fft2(&mut buf, true);
    let va = Array2::from_shape_vec((n, n), buf.iter().map(|c| c.re).collect()).unwrap();
    let vb = Array2::from_shape_vec((n, n), buf.iter().map(|c| c.im).collect()).unwrap();
    (PhysicalField { grid: g.clone(), values: va }, PhysicalField { grid: g.clone(), values: vb })
}

/// Builds `count` real lattice fields from per-mode coefficients supplied by
/// `fill(i, j, out)`, packing pairs into single complex inverse FFTs.
pub fn synthesize(grid: &Grid2D, count: usize, fill: impl Fn(usize, usize, &mut [Complex64])) -> Vec<PhysicalField> {
    let n = grid.n;
    let nb = count.div_ceil(2);
    let mut bufs = vec![vec![ZERO; n * n]; nb];
    let mut tmp = vec![ZERO; 2 * nb];
    for i in 0..n {
        for j in 0..n {
            tmp.fill(ZERO);
            fill(i, j, &mut tmp[..count]);
            let p = i * n + j;
            for (b, buf) in bufs.iter_mut().enumerate() {
                let (x, y) = (tmp[2 * b], tmp[2 * b + 1]);
                buf[p] = Complex64::new(x.re - y.im, x.im + y.re);
            }
        }
    }
    let mut out = Vec::with_capacity(count);
    for (b, mut buf) in bufs.into_iter().enumerate() {
        grid.fft2(&mut buf, true);
        out.push(PhysicalField { grid: grid.clone(), values: from_vec_re(n, buf.iter().map(|c| c.re).collect()) });
        if 2 * b + 1 < count {
            out.push(PhysicalField { grid: grid.clone(), values: from_vec_re(n, buf.iter().map(|c| c.im).collect()) });
        }
    }
    out
}

fn from_vec_re(n: usize, v: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((n, n), v).expect("square buffer")
}

/// Inverse transforms of a list of spectra, paired two at a time.
pub fn inverse_many(specs: &[&SpectrumField]) -> Vec<PhysicalField> {
    let mut out = Vec::with_capacity(specs.len());
    for pair in specs.chunks(2) {
        if pair.len() == 2 {
            let (a, b) = inverse_pair(pair[0], pair[1]);
            out.push(a);
            out.push(b);
        } else {
            out.push(pair[0].inverse());
        }
    }
    out
}

/// Forward transforms of a list of fields, paired two at a time.
pub fn forward_many(fields: &[&PhysicalField]) -> Vec<SpectrumField> {
    let mut out = Vec::with_capacity(fields.len());
    for pair in fields.chunks(2) {
        if pair.len() == 2 {
            let (a, b) = forward_pair(pair[0], pair[1]);
            out.push(a);
            out.push(b);
        } else {
            out.push(pair[0].forward());
        }
    }
    out
}

/// Product of two fields computed on the lattice and dealiased.
pub fn dealiased_product(a: &SpectrumField, b: &SpectrumField) -> SpectrumField {
    let (pa, pb) = inverse_pair(a, b);
    let mut s = pa.mul(&pb).forward();
    s.dealias();
    s
}

/// Batched evaluation of trigonometric interpolants (and their exact
/// derivatives) at off-lattice points.
///
/// Coefficients are stored on the half plane `k1 >= 0` so each value is
/// `Re sum_k1 e^{i k1 x} sum_k2 c e^{i k2 y}`. A Nyquist coefficient is split
/// evenly between `+n/2` and `-n/2`.
#[derive(Clone, Debug)]
pub struct Interpolator {
    band: usize,
    tables: Vec<(Vec<f64>, Vec<f64>)>,
    spread: OnceLock<Spreader>,
}

impl Interpolator {
    /// Each term is a spectrum and a derivative order `[d/dx, d/dy]`.
    pub fn new(terms: &[(&SpectrumField, [u32; 2])]) -> Self {
        let band = terms.iter().map(|(s, _)| s.max_mode()).max().unwrap_or(0);
        let w = 2 * band + 1;
        let tables = terms
            .iter()
            .map(|(s, d)| {
                let g = &s.grid;
                let n = g.n;
                let mut re = vec![0.0; (band + 1) * w];
                let mut im = vec![0.0; (band + 1) * w];
                let split = |i: usize| -> Vec<(i64, f64)> {
                    let k = g.wavenumber(i);
                    if 2 * i == n {
                        vec![(k, 0.5), (-k, 0.5)]
                    } else {
                        vec![(k, 1.0)]
                    }
                };
                for ((i, j), c) in s.coeffs.indexed_iter() {
                    if *c == ZERO {
                        continue;
                    }
                    for (k1, w1) in split(i) {
                        if k1 < 0 {
                            continue;
                        }
                        for &(k2, w2) in &split(j) {
                            let mut v = c * (w1 * w2 * if k1 > 0 { 2.0 } else { 1.0 });
                            for _ in 0..d[0] {
                                v *= Complex64::new(0.0, k1 as f64);
                            }
                            for _ in 0..d[1] {
                                v *= Complex64::new(0.0, k2 as f64);
                            }
                            let idx = k1 as usize * w + (k2 + band as i64) as usize;
                            re[idx] += v.re;
                            im[idx] += v.im;
                        }
                    }
                }
                (re, im)
            })
            .collect();
        Interpolator { band, tables, spread: OnceLock::new() }
    }

    /// Plain values of each field.
    pub fn from_fields(fields: &[&SpectrumField]) -> Self {
        let terms: Vec<_> = fields.iter().map(|s| (*s, [0u32, 0u32])).collect();
        Interpolator::new(&terms)
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Values per term, per point: `out[term][point]`.
    pub fn eval(&self, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        self.eval_with(points, Execution::default())
    }

    /// Large batches go through an oversampled lattice (agreeing with direct
    /// summation to about `1e-14` relative to the coefficient sum), small ones
    /// are summed directly.
    pub fn eval_with(&self, points: &[[f64; 2]], exec: Execution) -> Vec<Vec<f64>> {
        let nf = self.tables.len();
        let b = self.band;
        let direct = (points.len() * nf * (b + 1) * (2 * b + 1)) as f64;
        if nf > 0 && Spreader::cost(b, nf, points.len()) < 0.5 * direct {
            let mut flat = vec![0.0; points.len() * nf];
            self.spread.get_or_init(|| Spreader::new(b, &self.tables)).eval(points, &mut flat, exec);
            return unflatten(&flat, nf, points.len());
        }
        self.eval_direct_with(points, exec)
    }

    /// Direct summation over all modes.
    pub fn eval_direct_with(&self, points: &[[f64; 2]], exec: Execution) -> Vec<Vec<f64>> {
        let nf = self.tables.len();
        let np = points.len();
        let mut flat = vec![0.0; np * nf];
        if nf > 0 {
            const CHUNK: usize = 64;
            exec.for_chunks_mut(&mut flat, CHUNK * nf, |c, out| {
                let mut scratch = Scratch::new(self.band);
                for (p, o) in points[c * CHUNK..].iter().zip(out.chunks_mut(nf)) {
                    self.eval_point(*p, o, &mut scratch);
                }
            });
        }
        unflatten(&flat, nf, np)
    }

    fn eval_point(&self, p: [f64; 2], out: &mut [f64], s: &mut Scratch) {
        let b = self.band;
        let w = 2 * b + 1;
        phases(p[0], b, &mut s.ex_re, &mut s.ex_im);
        phases(p[1], b, &mut s.pos_re, &mut s.pos_im);
        for k in 0..=b {
            s.ey_re[b + k] = s.pos_re[k];
            s.ey_im[b + k] = s.pos_im[k];
            s.ey_re[b - k] = s.pos_re[k];
            s.ey_im[b - k] = -s.pos_im[k];
        }
        for (o, (tre, tim)) in out.iter_mut().zip(&self.tables) {
            let mut acc = 0.0;
            for k1 in 0..=b {
                let row = k1 * w..(k1 + 1) * w;
                let (sr, si) = cdot(&tre[row.clone()], &tim[row], &s.ey_re, &s.ey_im);
                acc += s.ex_re[k1] * sr - s.ex_im[k1] * si;
            }
            *o = acc;
        }
    }
}

fn unflatten(flat: &[f64], nf: usize, np: usize) -> Vec<Vec<f64>> {
    (0..nf).map(|f| (0..np).map(|p| flat[p * nf + f]).collect()).collect()
}

struct Scratch {
    ex_re: Vec<f64>,
    ex_im: Vec<f64>,
    pos_re: Vec<f64>,
    pos_im: Vec<f64>,
    ey_re: Vec<f64>,
    ey_im: Vec<f64>,
}

impl Scratch {
    fn new(b: usize) -> Self {
        Scratch {
            ex_re: vec![0.0; b + 1],
            ex_im: vec![0.0; b + 1],
            pos_re: vec![0.0; b + 1],
            pos_im: vec![0.0; b + 1],
            ey_re: vec![0.0; 2 * b + 1],
            ey_im: vec![0.0; 2 * b + 1],
        }
    }
}

/// `e^{i k t}` for `k = 0..=kmax`, re-anchored periodically to bound drift.
fn phases(t: f64, kmax: usize, re: &mut [f64], im: &mut [f64]) {
    let (s1, c1) = t.sin_cos();
    re[0] = 1.0;
    im[0] = 0.0;
    for k in 1..=kmax {
        if k % 16 == 0 {
            let (s, c) = (k as f64 * t).sin_cos();
            re[k] = c;
            im[k] = s;
        } else {
            re[k] = re[k - 1] * c1 - im[k - 1] * s1;
            im[k] = re[k - 1] * s1 + im[k - 1] * c1;
        }
    }
}

/// Complex dot product `sum a_k e_k` with split storage and four accumulators.
#[inline]
fn cdot(ar: &[f64], ai: &[f64], er: &[f64], ei: &[f64]) -> (f64, f64) {
    let n = ar.len();
    let (mut r, mut i) = ([0.0f64; 4], [0.0f64; 4]);
    let m = n / 4 * 4;
    let mut k = 0;
    while k < m {
        for l in 0..4 {
            r[l] += ar[k + l] * er[k + l] - ai[k + l] * ei[k + l];
            i[l] += ar[k + l] * ei[k + l] + ai[k + l] * er[k + l];
        }
        k += 4;
    }
    let mut sr = (r[0] + r[1]) + (r[2] + r[3]);
    let mut si = (i[0] + i[1]) + (i[2] + i[3]);
    for k in m..n {
        sr += ar[k] * er[k] - ai[k] * ei[k];
        si += ar[k] * ei[k] + ai[k] * er[k];
    }
    (sr, si)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(x: f64, y: f64) -> f64 {
        (x.sin() + 0.3 * (2.0 * y).cos()).exp() + 0.1 * (3.0 * x - y).sin()
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid2D::new(7).is_err());
        assert!(Grid2D::new(6).is_err());
        assert!(Grid2D::new(33).is_err());
        assert!(Grid2D::new(8).is_ok());
    }

    #[test]
    fn layout() {
        let g = Grid2D::new(8).unwrap();
        let ks: Vec<i64> = (0..8).map(|i| g.wavenumber(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_eq!(g.index(-4), Some(4));
        assert_eq!(g.index(4), None);
        assert_eq!(g.index(-1), Some(7));
    }

    #[test]
    fn single_mode_coefficients() {
        let g = Grid2D::new(16).unwrap();
        let f = PhysicalField::from_fn(&g, |x, y| (2.0 * x + 3.0 * y).cos() + 0.5);
        let s = f.forward();
        assert!((s.coeff(0, 0).re - 0.5).abs() < 1e-15);
        assert!((s.coeff(2, 3) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((s.coeff(-2, -3) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        let m = SpectrumField::from_modes(&g, &[(2, 3, 1.0, 0.0), (0, 0, 0.5, 0.0)]).unwrap();
        assert!(m.sub(&s).max_abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let g = Grid2D::new(32).unwrap();
        let f = PhysicalField::from_fn(&g, smooth);
        let back = f.forward().inverse();
        let err = (&back.values - &f.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-13, "round trip error {err}");
    }

    #[test]
    fn paired_transforms_match_single() {
        let g = Grid2D::new(16).unwrap();
        let a = PhysicalField::from_fn(&g, smooth);
        let b = PhysicalField::from_fn(&g, |x, y| (x - 2.0 * y).sin() * y.cos());
        let (sa, sb) = forward_pair(&a, &b);
        assert!(sa.sub(&a.forward()).max_abs() < 1e-15);
        assert!(sb.sub(&b.forward()).max_abs() < 1e-15);
        let (pa, pb) = inverse_pair(&sa, &sb);
        assert!((&pa.values - &a.values).iter().all(|v| v.abs() < 1e-13));
        assert!((&pb.values - &b.values).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn derivative_symbols() {
        let g = Grid2D::new(32).unwrap();
        let f = PhysicalField::from_fn(&g, |x, y| (2.0 * x).sin() * (3.0 * y).cos());
        let fx = f.forward().apply(Multiplier::Grad(Axis::X)).inverse();
        let exact = PhysicalField::from_fn(&g, |x, y| 2.0 * (2.0 * x).cos() * (3.0 * y).cos());
        assert!((&fx.values - &exact.values).iter().all(|v| v.abs() < 1e-13));
        let lap = f.forward().apply(Multiplier::LapPos).inverse();
        assert!((&lap.values - &(&f.values * 13.0)).iter().all(|v| v.abs() < 1e-12));
        let back = f.forward().apply(Multiplier::Helmholtz).apply(Multiplier::HelmholtzInv);
        assert!(back.sub(&f.forward()).max_abs() < 1e-16);
    }

    #[test]
    fn nyquist_derivative_is_zero() {
        let g = Grid2D::new(8).unwrap();
        let f = PhysicalField::from_fn(&g, |x, _| (4.0 * x).cos());
        let d = f.forward().apply(Multiplier::Grad(Axis::X));
        assert!(d.max_abs() < 1e-15);
    }

    #[test]
    fn dealias_band_values() {
        for (n, b) in [(32, 10), (48, 15), (64, 21), (128, 42)] {
            let g = Grid2D::new(n).unwrap();
            assert_eq!(g.dealias_band(), b);
            assert!(g.keeps(b as i64, -(b as i64)));
            assert!(!g.keeps(b as i64 + 1, 0));
        }
    }

    /// The dealiased lattice product equals the truncated exact convolution.
    #[test]
    fn dealiased_product_matches_convolution() {
        let g = Grid2D::new(32).unwrap();
        let b = g.dealias_band() as i64;
        let a = SpectrumField::from_modes(&g, &[(b, 1, 1.0, 0.3), (-3, b, 0.4, 0.0), (2, 2, 0.0, 1.0)]).unwrap();
        let c = SpectrumField::from_modes(&g, &[(b, -b, 0.7, 0.1), (1, 0, 1.0, 0.0), (0, b - 1, 0.0, 0.5)]).unwrap();
        let p = dealiased_product(&a, &c);
        for k1 in -b..=b {
            for k2 in -b..=b {
                let mut exact = ZERO;
                for l1 in -b..=b {
                    for l2 in -b..=b {
                        let (m1, m2) = (k1 - l1, k2 - l2);
                        if m1.abs() <= b && m2.abs() <= b {
                            exact += a.coeff(l1, l2) * c.coeff(m1, m2);
                        }
                    }
                }
                assert!((p.coeff(k1, k2) - exact).norm() < 1e-15, "mismatch at ({k1},{k2})");
            }
        }
    }

    /// Large batches take the oversampled-lattice path; it must agree with
    /// direct summation, derivatives and Nyquist rows included.
    #[test]
    fn lattice_path_matches_direct_sum() {
        use rand::{Rng, SeedableRng};
        let g = Grid2D::new(64).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut c = SpectrumField::zeros(&g);
        let phys = PhysicalField::from_fn(&g, |x, y| (x.sin() * (2.0 * y).cos()).exp() + (31.0 * x + 3.0 * y).cos());
        c.coeffs = phys.forward().coeffs;
        c.coeffs[[32, 3]] = Complex64::new(0.01, 0.0);
        let terms = [(&c, [0u32, 0u32]), (&c, [1, 0]), (&c, [0, 1]), (&c, [2, 1]), (&c, [0, 2])];
        let ip = Interpolator::new(&terms);
        let pts: Vec<[f64; 2]> = (0..3000).map(|_| [rng.gen_range(-1.0..7.5), rng.gen_range(-7.0..7.0)]).collect();
        let direct = ip.eval_direct_with(&pts, Execution::Sequential);
        let fast = ip.eval_with(&pts, Execution::default());
        assert!(ip.spread.get().is_some(), "batch should use the lattice path");
        for (t, (d, f)) in direct.iter().zip(&fast).enumerate() {
            let scale = d.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let err = d.iter().zip(f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-12 * scale, "term {t}: {err:e} vs {scale:e}");
        }
    }

    #[test]
    fn interpolation_hits_lattice_and_exact_values() {
        let g = Grid2D::new(16).unwrap();
        let f = PhysicalField::from_fn(&g, smooth);
        let s = f.forward();
        let pts: Vec<[f64; 2]> = [(0, 0), (3, 5), (15, 1), (8, 8)]
            .iter()
            .map(|&(i, j)| [g.node(i), g.node(j)])
            .collect();
        let v = s.interpolate(&pts);
        for (p, (i, j)) in v.iter().zip([(0, 0), (3, 5), (15, 1), (8, 8)]) {
            assert!((p - f.values[[i, j]]).abs() < 1e-13);
        }
        let c = PhysicalField::from_fn(&g, |x, _| x.cos()).forward();
        let z = c.interpolate(&[[PI / 2.0, 0.37], [PI / 2.0, 5.0]]);
        assert!(z.iter().all(|v| v.abs() < 1e-14));
        let t = SpectrumField::from_modes(&g, &[(3, -2, 0.7, -0.2)]).unwrap();
        let p: [f64; 2] = [1.234, 5.678];
        let exact = 0.7 * (3.0 * p[0] - 2.0 * p[1]).cos() - 0.2 * (3.0 * p[0] - 2.0 * p[1]).sin();
        assert!((t.interpolate(&[p])[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn interpolated_derivatives() {
        let g = Grid2D::new(16).unwrap();
        let t = SpectrumField::from_modes(&g, &[(3, -2, 0.7, -0.2), (1, 1, 0.3, 0.0)]).unwrap();
        let it = Interpolator::new(&[(&t, [1, 0]), (&t, [0, 2])]);
        let p: [f64; 2] = [0.4, 2.2];
        let v = it.eval(&[p]);
        let ph = 3.0 * p[0] - 2.0 * p[1];
        let q = p[0] + p[1];
        let dx = -0.7 * 3.0 * ph.sin() - 0.2 * 3.0 * ph.cos() - 0.3 * q.sin();
        let dyy = -4.0 * (0.7 * ph.cos() - 0.2 * ph.sin()) - 0.3 * q.cos();
        assert!((v[0][0] - dx).abs() < 1e-13);
        assert!((v[1][0] - dyy).abs() < 1e-13);
    }

    #[test]
    fn nyquist_split_interpolation() {
        let g = Grid2D::new(8).unwrap();
        let f = PhysicalField::from_fn(&g, |x, y| (4.0 * x).cos() + (4.0 * y).cos());
        let p: [f64; 2] = [0.3, 1.1];
        let v = f.forward().interpolate(&[p])[0];
        assert!((v - ((4.0 * p[0]).cos() + (4.0 * p[1]).cos())).abs() < 1e-13);
    }

    #[test]
    fn resample_preserves_resolved_modes() {
        let g = Grid2D::new(16).unwrap();
        let h = Grid2D::new(32).unwrap();
        let s = SpectrumField::from_modes(&g, &[(3, -2, 0.7, -0.2), (7, 7, 1.0, 0.0)]).unwrap();
        let up = s.resample(&h);
        assert_eq!(up.coeff(3, -2), s.coeff(3, -2));
        assert_eq!(up.resample(&g).sub(&s).max_abs(), 0.0);
    }
}
