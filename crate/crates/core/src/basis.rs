//! Finite Fourier bases of symplectic fields and matrices of operators on them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{config, Error, Result};
use crate::exec::Execution;
use crate::fields::{h1_inner, project_P, SymplecticVectorField, VelocityField};
use crate::flow::{FlowMap, PreparedFlow};
use crate::spectral::{Axis, Grid2D, SpectrumField, AREA};

/// One basis direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisMode {
    /// Constant field along an axis.
    Harmonic(Axis),
    /// Stream `a cos(k.x)`.
    Cos(i64, i64),
    /// Stream `a sin(k.x)`.
    Sin(i64, i64),
}

/// `H^1`-normalized Fourier basis: harmonic directions first, then
/// cosine/sine pairs of stream modes.
#[derive(Clone, Debug)]
pub struct GalerkinBasis {
    grid: Grid2D,
    modes: Vec<BasisMode>,
    scale: Vec<f64>,
    elements: Vec<SymplecticVectorField>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Canonical representative of `±k`: `k1 > 0`, or `k1 = 0` and `k2 > 0`.
fn canonical(k1: i64, k2: i64) -> (i64, i64) {
    if k1 > 0 || (k1 == 0 && k2 > 0) {
        (k1, k2)
    } else {
        (-k1, -k2)
    }
}

fn weight(k1: i64, k2: i64) -> f64 {
    let kk = (k1 * k1 + k2 * k2) as f64;
    kk * (1.0 + kk)
}

impl GalerkinBasis {
    /// The `m` lowest directions: both harmonics, then stream modes by
    /// increasing `|k|^2` (ties broken by `k1`, then `k2`).
    pub fn lowest(grid: &Grid2D, m: usize) -> Result<Self> {
        let h = (grid.n() / 2) as i64 - 1;
        let mut ks = Vec::new();
        for k1 in 0..=h {
            for k2 in -h..=h {
                if (k1, k2) != (0, 0) && canonical(k1, k2) == (k1, k2) {
                    ks.push((k1, k2));
                }
            }
        }
        ks.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
        let mut modes = vec![BasisMode::Harmonic(Axis::X), BasisMode::Harmonic(Axis::Y)];
        for (a, b) in ks {
            modes.push(BasisMode::Cos(a, b));
            modes.push(BasisMode::Sin(a, b));
        }
        if m > modes.len() {
            return config(format!("basis dimension {m} exceeds the {} directions of an n = {} grid", modes.len(), grid.n()));
        }
        modes.truncate(m);
        Self::from_modes(grid, modes)
    }

    /// Cosine and sine directions for each listed wavevector, optionally
    /// preceded by the two harmonic directions.
    pub fn from_wavevectors(grid: &Grid2D, ks: &[(i64, i64)], harmonics: bool) -> Result<Self> {
        let mut modes = Vec::new();
        if harmonics {
            modes.push(BasisMode::Harmonic(Axis::X));
            modes.push(BasisMode::Harmonic(Axis::Y));
        }
        for &(a, b) in ks {
            let (a, b) = canonical(a, b);
            modes.push(BasisMode::Cos(a, b));
            modes.push(BasisMode::Sin(a, b));
        }
        Self::from_modes(grid, modes)
    }

    pub fn from_modes(grid: &Grid2D, modes: Vec<BasisMode>) -> Result<Self> {
        if modes.is_empty() {
            return config("empty basis");
        }
        let h = (grid.n() / 2) as i64;
        let mut seen = std::collections::HashSet::new();
        let mut scale = Vec::with_capacity(modes.len());
        let mut elements = Vec::with_capacity(modes.len());
        for &md in &modes {
            let mut md_c = md;
            if let BasisMode::Cos(a, b) | BasisMode::Sin(a, b) = md {
                if (a, b) == (0, 0) || a.abs() >= h || b.abs() >= h {
                    return config(format!("basis wavevector ({a}, {b}) not resolved on an n = {} grid", grid.n()));
                }
                let (a, b) = canonical(a, b);
                md_c = if matches!(md, BasisMode::Cos(..)) { BasisMode::Cos(a, b) } else { BasisMode::Sin(a, b) };
            }
            if !seen.insert(format!("{md_c:?}")) {
                return config(format!("duplicate basis direction {md:?}"));
            }
            let (s, e) = match md {
                BasisMode::Harmonic(ax) => {
                    let s = 1.0 / AREA.sqrt();
                    let hv = if ax == Axis::X { [s, 0.0] } else { [0.0, s] };
                    (s, SymplecticVectorField::new(SpectrumField::zeros(grid), hv))
                }
                BasisMode::Cos(a, b) => {
                    let s = (2.0 / (AREA * weight(a, b))).sqrt();
                    (s, SymplecticVectorField::from_modes(grid, &[(a, b, s, 0.0)], [0.0; 2])?)
                }
                BasisMode::Sin(a, b) => {
                    let s = (2.0 / (AREA * weight(a, b))).sqrt();
                    (s, SymplecticVectorField::from_modes(grid, &[(a, b, 0.0, s)], [0.0; 2])?)
                }
            };
            scale.push(s);
            elements.push(e);
        }
        let m = modes.len();
        let gram = DMatrix::from_fn(m, m, |i, j| h1_inner(&elements[i], &elements[j]));
        let chol = Cholesky::new(gram.clone()).ok_or_else(|| Error::Config("basis Gram matrix is singular".into()))?;
        Ok(GalerkinBasis { grid: grid.clone(), modes, scale, elements, gram, chol })
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn modes(&self) -> &[BasisMode] {
        &self.modes
    }

    pub fn element(&self, i: usize) -> &SymplecticVectorField {
        &self.elements[i]
    }

    pub fn elements(&self) -> &[SymplecticVectorField] {
        &self.elements
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Largest `|k|_inf` among the basis wavevectors.
    pub fn max_mode(&self) -> usize {
        self.modes
            .iter()
            .map(|m| match m {
                BasisMode::Harmonic(_) => 0,
                BasisMode::Cos(a, b) | BasisMode::Sin(a, b) => a.unsigned_abs().max(b.unsigned_abs()) as usize,
            })
            .max()
            .unwrap_or(0)
    }

    /// `b_i = <e_i, u>_1`, read directly from the spectrum of `u` (any grid).
    pub fn moments(&self, u: &SymplecticVectorField) -> DVector<f64> {
        let s = u.stream();
        let hh = u.harmonic();
        DVector::from_iterator(
            self.dim(),
            self.modes.iter().zip(&self.scale).map(|(m, &a)| match *m {
                BasisMode::Harmonic(Axis::X) => AREA * a * hh[0],
                BasisMode::Harmonic(Axis::Y) => AREA * a * hh[1],
                BasisMode::Cos(k1, k2) => AREA * weight(k1, k2) * a * s.coeff(k1, k2).re,
                BasisMode::Sin(k1, k2) => -AREA * weight(k1, k2) * a * s.coeff(k1, k2).im,
            }),
        )
    }

    /// Coordinates of the `H^1`-orthogonal projection of `u` onto the span.
    pub fn coords(&self, u: &SymplecticVectorField) -> DVector<f64> {
        self.chol.solve(&self.moments(u))
    }

    /// Coordinates of `P u` for an ambient field.
    pub fn coords_velocity(&self, u: &VelocityField) -> DVector<f64> {
        self.coords(&project_P(u))
    }

    /// `sum_i c_i e_i` on the basis grid.
    pub fn synthesize(&self, c: &DVector<f64>) -> SymplecticVectorField {
        self.synthesize_on(c, &self.grid)
    }

    /// `sum_i c_i e_i` on another grid that resolves every basis mode.
    pub fn synthesize_on(&self, c: &DVector<f64>, grid: &Grid2D) -> SymplecticVectorField {
        let mut f = SpectrumField::zeros(grid);
        let mut hv = [0.0; 2];
        for ((m, &a), &ci) in self.modes.iter().zip(&self.scale).zip(c.iter()) {
            let (k1, k2, z) = match *m {
                BasisMode::Harmonic(Axis::X) => {
                    hv[0] += a * ci;
                    continue;
                }
                BasisMode::Harmonic(Axis::Y) => {
                    hv[1] += a * ci;
                    continue;
                }
                BasisMode::Cos(k1, k2) => (k1, k2, Complex64::new(a * ci / 2.0, 0.0)),
                BasisMode::Sin(k1, k2) => (k1, k2, Complex64::new(0.0, -a * ci / 2.0)),
            };
            let (i, j) = (grid.index(k1).expect("mode fits"), grid.index(k2).expect("mode fits"));
            f.coeffs_mut()[[i, j]] += z;
            let (ni, nj) = (grid.neg_index(i), grid.neg_index(j));
            f.coeffs_mut()[[ni, nj]] += z.conj();
        }
        SymplecticVectorField::new(f, hv)
    }

    /// `H^1` inner product of two coordinate vectors.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a.transpose() * &self.gram * b)[(0, 0)]
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Matrix of a linear operator compressed onto the basis (column `j` is
    /// the coordinate vector of `op(e_j)`).
    pub fn operator_matrix<F>(&self, op: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&SymplecticVectorField) -> Result<SymplecticVectorField> + Sync + Send,
    {
        self.operator_matrix_with(Execution::default(), op)
    }

    pub fn operator_matrix_with<F>(&self, exec: Execution, op: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&SymplecticVectorField) -> Result<SymplecticVectorField> + Sync + Send,
    {
        let cols = exec.map(self.dim(), |j| op(&self.elements[j]).map(|u| self.coords(&u)));
        let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// Same as [`Self::operator_matrix_with`] for operators returning ambient fields (projected by `P`).
    pub fn velocity_operator_matrix_with<F>(&self, exec: Execution, op: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&SymplecticVectorField) -> Result<VelocityField> + Sync + Send,
    {
        let cols = exec.map(self.dim(), |j| op(&self.elements[j]).map(|u| self.coords_velocity(&u)));
        let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// `H^1` adjoint of a coordinate matrix: `G^{-1} A^T G`.
    pub fn adjoint(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(&(a.transpose() * &self.gram))
    }
}

/// Matrix of `Ad*_η` on the basis: the `H^1` adjoint of the compressed `P Ad_η`.
pub fn ad_star_matrix(eta: &FlowMap, basis: &GalerkinBasis) -> Result<DMatrix<f64>> {
    let pf = PreparedFlow::with_inverse(eta)?;
    ad_star_matrix_prepared(&pf, basis, Execution::default())
}

pub fn ad_star_matrix_prepared(pf: &PreparedFlow<'_>, basis: &GalerkinBasis, exec: Execution) -> Result<DMatrix<f64>> {
    let a = basis.velocity_operator_matrix_with(exec, |w| pf.ad_forward(&w.velocity()))?;
    Ok(basis.adjoint(&a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{ad, ad_star};

    #[test]
    fn lowest_layout_and_normalization() {
        let g = Grid2D::new(16).unwrap();
        let b = GalerkinBasis::lowest(&g, 12).unwrap();
        assert_eq!(b.modes()[0], BasisMode::Harmonic(Axis::X));
        assert_eq!(b.modes()[2], BasisMode::Cos(0, 1));
        assert_eq!(b.modes()[4], BasisMode::Cos(1, 0));
        assert_eq!(b.modes()[10], BasisMode::Cos(0, 2));
        let eye = DMatrix::<f64>::identity(12, 12);
        assert!((b.gram() - eye).abs().max() < 1e-12);
        assert!(GalerkinBasis::lowest(&g, 10_000).is_err());
    }

    #[test]
    fn coords_round_trip() {
        let g = Grid2D::new(16).unwrap();
        let b = GalerkinBasis::lowest(&g, 24).unwrap();
        let c = DVector::from_fn(24, |i, _| (i as f64 * 0.37).sin());
        let u = b.synthesize(&c);
        assert!((b.coords(&u) - &c).norm() < 1e-12);
        assert!((b.norm(&c) - u.h1_norm()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_directions_rejected() {
        let g = Grid2D::new(16).unwrap();
        assert!(GalerkinBasis::from_wavevectors(&g, &[(1, 0), (-1, 0)], false).is_err());
    }

    #[test]
    fn identity_flow_gives_identity_matrix() {
        let g = Grid2D::new(16).unwrap();
        let b = GalerkinBasis::lowest(&g, 12).unwrap();
        let m = ad_star_matrix(&FlowMap::identity(&g), &b).unwrap();
        assert!((m - DMatrix::<f64>::identity(12, 12)).abs().max() < 1e-12);
    }

    /// v from cos x, w from cos y, adjoint identity against
    /// every element of the 12-direction basis.
    #[test]
    fn coadjoint_on_low_basis() {
        let g = Grid2D::new(32).unwrap();
        let b = GalerkinBasis::lowest(&g, 12).unwrap();
        let v = SymplecticVectorField::from_modes(&g, &[(1, 0, 1.0, 0.0)], [0.0; 2]).unwrap();
        let w = SymplecticVectorField::from_modes(&g, &[(0, 1, 1.0, 0.0)], [0.0; 2]).unwrap();
        let s = ad_star(&v, &w);
        for x in b.elements() {
            let lhs = h1_inner(&s, x);
            let rhs = h1_inner(&w, &ad(&v, x));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
