//! Lagrangian flow maps and the group actions `Ad`, `Ad*`.
//!
//! A [`FlowMap`] tracks particles started on a label lattice: unwrapped
//! positions `η(x)` and the Jacobian `Dη(x)`, advanced by
//! `η' = v∘η`, `Dη' = (grad v ∘ η) Dη`. Off-lattice values of `η` come from
//! the trigonometric interpolant of the periodic displacement `η(x) - x`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fields::{helmholtz, helmholtz_inv, project_P, SymplecticVectorField, VelocityField};
use crate::spectral::{forward_many, forward_pair, Grid2D, Interpolator, PhysicalField, SpectrumField};

/// Newton iteration cap for flow-map inversion.
pub const NEWTON_MAX_ITER: usize = 20;
/// Newton residual tolerance (absolute, in position units).
pub const NEWTON_TOL: f64 = 1e-12;

/// Particle positions and deformation gradients on a label lattice.
#[derive(Clone, Debug)]
pub struct FlowMap {
    grid: Grid2D,
    pos: Vec<[f64; 2]>,
    /// Row-major `[∂1η1, ∂2η1, ∂1η2, ∂2η2]`.
    jac: Vec<[f64; 4]>,
    t: f64,
}

/// Lattice samples of `η^{-1}`.
#[derive(Clone, Debug)]
pub struct InverseMap {
    pub points: Vec<[f64; 2]>,
    pub iterations: usize,
    pub worst_residual: f64,
}

/// Which adjoint action to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdDirection {
    /// `Ad_η w = (Dη w)∘η^{-1}`.
    Forward,
    /// `Ad_{η^{-1}} w = (Dη)^{-1} (w∘η)`.
    Inverse,
}

/// Label lattice `(x_i, y_j)` in row-major order.
pub fn lattice_points(grid: &Grid2D) -> Vec<[f64; 2]> {
    let n = grid.n();
    (0..n * n).map(|p| [grid.node(p / n), grid.node(p % n)]).collect()
}

fn wrap(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

fn inv2(a: [f64; 4]) -> [f64; 4] {
    let det = a[0] * a[3] - a[1] * a[2];
    [a[3] / det, -a[1] / det, -a[2] / det, a[0] / det]
}

fn matvec(a: [f64; 4], v: [f64; 2]) -> [f64; 2] {
    [a[0] * v[0] + a[1] * v[1], a[2] * v[0] + a[3] * v[1]]
}

fn matvec_t(a: [f64; 4], v: [f64; 2]) -> [f64; 2] {
    [a[0] * v[0] + a[2] * v[1], a[1] * v[0] + a[3] * v[1]]
}

fn matmul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// Velocity and velocity gradient of a symplectic field at arbitrary points.
pub fn velocity_and_gradient(
    v: &SymplecticVectorField,
    pts: &[[f64; 2]],
    exec: Execution,
) -> (Vec<[f64; 2]>, Vec<[f64; 4]>) {
    let f = v.stream();
    let it = Interpolator::new(&[(f, [0, 1]), (f, [1, 0]), (f, [1, 1]), (f, [0, 2]), (f, [2, 0])]);
    let e = it.eval_with(pts, exec);
    let h = v.harmonic();
    let vel = (0..pts.len()).map(|p| [e[0][p] + h[0], -e[1][p] + h[1]]).collect();
    let grad = (0..pts.len()).map(|p| [e[2][p], e[3][p], -e[4][p], -e[2][p]]).collect();
    (vel, grad)
}

impl FlowMap {
    pub fn identity(grid: &Grid2D) -> Self {
        let pos = lattice_points(grid);
        let jac = vec![[1.0, 0.0, 0.0, 1.0]; pos.len()];
        FlowMap { grid: grid.clone(), pos, jac, t: 0.0 }
    }

    /// Rigid translation `x + t a`.
    pub fn translation(grid: &Grid2D, a: [f64; 2], t: f64) -> Self {
        let mut m = FlowMap::identity(grid);
        m.pos.iter_mut().for_each(|p| {
            p[0] += t * a[0];
            p[1] += t * a[1];
        });
        m.t = t;
        m
    }

    /// Flow map from explicit lattice data.
    pub fn from_parts(grid: &Grid2D, pos: Vec<[f64; 2]>, jac: Vec<[f64; 4]>, t: f64) -> Result<Self> {
        let n2 = grid.n() * grid.n();
        if pos.len() != n2 || jac.len() != n2 {
            return Err(Error::Config("flow-map arrays do not match the label lattice".into()));
        }
        Ok(FlowMap { grid: grid.clone(), pos, jac, t })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.pos
    }

    pub fn jacobians(&self) -> &[[f64; 4]] {
        &self.jac
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// `max |det Dη - 1|` over the lattice.
    pub fn detjac_deviation(&self) -> f64 {
        self.jac.iter().fold(0.0f64, |m, a| m.max((a[0] * a[3] - a[1] * a[2] - 1.0).abs()))
    }

    /// Spectra of the periodic displacement `η(x) - x`.
    pub fn displacement_spectra(&self) -> [SpectrumField; 2] {
        let n = self.grid.n();
        let mut a = PhysicalField::zeros(&self.grid);
        let mut b = PhysicalField::zeros(&self.grid);
        for (p, x) in self.pos.iter().enumerate() {
            let (i, j) = (p / n, p % n);
            a.values_mut()[[i, j]] = x[0] - self.grid.node(i);
            b.values_mut()[[i, j]] = x[1] - self.grid.node(j);
        }
        let (sa, sb) = forward_pair(&a, &b);
        [sa, sb]
    }

    /// Spectra of the four Jacobian entries (periodic in the label).
    pub fn jacobian_spectra(&self) -> [SpectrumField; 4] {
        let n = self.grid.n();
        let mut f: Vec<PhysicalField> = (0..4).map(|_| PhysicalField::zeros(&self.grid)).collect();
        for (p, a) in self.jac.iter().enumerate() {
            for c in 0..4 {
                f[c].values_mut()[[p / n, p % n]] = a[c];
            }
        }
        let s = forward_many(&[&f[0], &f[1], &f[2], &f[3]]);
        [s[0].clone(), s[1].clone(), s[2].clone(), s[3].clone()]
    }

    /// One RK4 step of `(η, Dη)` driven by stage velocities
    /// `v(t), v(t + dt/2), v(t + dt/2), v(t + dt)` (the stage states of the
    /// co-integrated velocity equation).
    pub fn rk4_step(&self, stages: [&SymplecticVectorField; 4], dt: f64, exec: Execution) -> FlowMap {
        let np = self.pos.len();
        let coef = [0.0, 0.5, 0.5, 1.0];
        let weight = [1.0, 2.0, 2.0, 1.0];
        let mut pos = self.pos.clone();
        let mut jac = self.jac.clone();
        let mut prev: Option<(Vec<[f64; 2]>, Vec<[f64; 4]>)> = None;
        for s in 0..4 {
            let (xs, ds): (Vec<[f64; 2]>, Vec<[f64; 4]>) = match &prev {
                None => (self.pos.clone(), self.jac.clone()),
                Some((kx, kd)) => (
                    (0..np).map(|p| [self.pos[p][0] + coef[s] * dt * kx[p][0], self.pos[p][1] + coef[s] * dt * kx[p][1]]).collect(),
                    (0..np)
                        .map(|p| {
                            let mut d = self.jac[p];
                            for c in 0..4 {
                                d[c] += coef[s] * dt * kd[p][c];
                            }
                            d
                        })
                        .collect(),
                ),
            };
            let (vel, grad) = velocity_and_gradient(stages[s], &xs, exec);
            let kd: Vec<[f64; 4]> = (0..np).map(|p| matmul(grad[p], ds[p])).collect();
            for p in 0..np {
                let w = weight[s] * dt / 6.0;
                pos[p][0] += w * vel[p][0];
                pos[p][1] += w * vel[p][1];
                for c in 0..4 {
                    jac[p][c] += w * kd[p][c];
                }
            }
            prev = Some((vel, kd));
        }
        FlowMap { grid: self.grid.clone(), pos, jac, t: self.t + dt }
    }

    /// `η` and the interpolant's `Dη` at arbitrary labels.
    pub fn eval(&self, pts: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<[f64; 4]>) {
        let [d1, d2] = self.displacement_spectra();
        let it = Interpolator::new(&[
            (&d1, [0, 0]),
            (&d2, [0, 0]),
            (&d1, [1, 0]),
            (&d1, [0, 1]),
            (&d2, [1, 0]),
            (&d2, [0, 1]),
        ]);
        let e = it.eval(pts);
        let eta = pts.iter().enumerate().map(|(p, x)| [x[0] + e[0][p], x[1] + e[1][p]]).collect();
        let jac = (0..pts.len()).map(|p| [1.0 + e[2][p], e[3][p], e[4][p], 1.0 + e[5][p]]).collect();
        (eta, jac)
    }

    /// Solves `η(ξ) = y` (mod 2π) for every lattice node `y`, starting from `y - d(y)`.
    pub fn inverse(&self) -> Result<InverseMap> {
        let n = self.grid.n();
        let guess: Vec<[f64; 2]> = self
            .pos
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let (a, b) = (self.grid.node(p / n), self.grid.node(p % n));
                [2.0 * a - x[0], 2.0 * b - x[1]]
            })
            .collect();
        self.inverse_from(&guess)
    }

    /// Newton inversion from a caller-supplied initial guess (e.g. the
    /// inverse at a nearby time).
    pub fn inverse_from(&self, guess: &[[f64; 2]]) -> Result<InverseMap> {
        let targets = lattice_points(&self.grid);
        let [d1, d2] = self.displacement_spectra();
        let it = Interpolator::new(&[
            (&d1, [0, 0]),
            (&d2, [0, 0]),
            (&d1, [1, 0]),
            (&d1, [0, 1]),
            (&d2, [1, 0]),
            (&d2, [0, 1]),
        ]);
        let mut xi = guess.to_vec();
        let mut active: Vec<usize> = (0..xi.len()).collect();
        let mut res = vec![f64::INFINITY; xi.len()];
        let mut iters = 0;
        while !active.is_empty() && iters < NEWTON_MAX_ITER {
            iters += 1;
            let pts: Vec<[f64; 2]> = active.iter().map(|&p| xi[p]).collect();
            let e = it.eval(&pts);
            let mut next = Vec::with_capacity(active.len());
            for (a, &p) in active.iter().enumerate() {
                let r = [
                    wrap(pts[a][0] + e[0][a] - targets[p][0]),
                    wrap(pts[a][1] + e[1][a] - targets[p][1]),
                ];
                let rn = r[0].abs().max(r[1].abs());
                res[p] = rn;
                if rn <= NEWTON_TOL {
                    continue;
                }
                let jac = [1.0 + e[2][a], e[3][a], e[4][a], 1.0 + e[5][a]];
                let step = matvec(inv2(jac), r);
                // Limit wild steps far from the root.
                let s = step[0].abs().max(step[1].abs());
                let damp = if s > 1.0 { 1.0 / s } else { 1.0 };
                xi[p] = [xi[p][0] - damp * step[0], xi[p][1] - damp * step[1]];
                next.push(p);
            }
            active = next;
        }
        if !active.is_empty() {
            // Residuals of the final iterate.
            let pts: Vec<[f64; 2]> = active.iter().map(|&p| xi[p]).collect();
            let e = it.eval(&pts);
            for (a, &p) in active.iter().enumerate() {
                res[p] = wrap(pts[a][0] + e[0][a] - targets[p][0])
                    .abs()
                    .max(wrap(pts[a][1] + e[1][a] - targets[p][1]).abs());
            }
        }
        let worst = res.iter().fold(0.0f64, |m, r| m.max(*r));
        if worst > NEWTON_TOL {
            return Err(Error::NewtonDiverged { iterations: iters, worst_residual: worst });
        }
        Ok(InverseMap { points: xi, iterations: iters, worst_residual: worst })
    }
}

/// A flow map with cached interpolation data for repeated group actions.
#[derive(Clone, Debug)]
pub struct PreparedFlow<'a> {
    eta: &'a FlowMap,
    inv: Option<InverseMap>,
    /// `Dη` at the inverse points.
    jac_at_inv: Option<Vec<[f64; 4]>>,
    exec: Execution,
}

fn sample_vector(it: &Interpolator, pts: &[[f64; 2]], exec: Execution) -> Vec<[f64; 2]> {
    let e = it.eval_with(pts, exec);
    (0..pts.len()).map(|p| [e[0][p], e[1][p]]).collect()
}

impl<'a> PreparedFlow<'a> {
    /// Supports `Ad_{η^{-1}}` and `Ad*_η` only.
    pub fn new(eta: &'a FlowMap) -> Self {
        PreparedFlow { eta, inv: None, jac_at_inv: None, exec: Execution::default() }
    }

    /// Also inverts the map, enabling `Ad_η` and `Ad*_{η^{-1}}`.
    pub fn with_inverse(eta: &'a FlowMap) -> Result<Self> {
        let inv = eta.inverse()?;
        Ok(Self::from_inverse(eta, inv))
    }

    pub fn from_inverse(eta: &'a FlowMap, inv: InverseMap) -> Self {
        let js = eta.jacobian_spectra();
        let it = Interpolator::from_fields(&[&js[0], &js[1], &js[2], &js[3]]);
        let e = it.eval(&inv.points);
        let jac = (0..inv.points.len()).map(|p| [e[0][p], e[1][p], e[2][p], e[3][p]]).collect();
        PreparedFlow { eta, inv: Some(inv), jac_at_inv: Some(jac), exec: Execution::default() }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn flow(&self) -> &FlowMap {
        self.eta
    }

    pub fn inverse_map(&self) -> Option<&InverseMap> {
        self.inv.as_ref()
    }

    fn need_inverse(&self) -> Result<(&[[f64; 2]], &[[f64; 4]])> {
        match (&self.inv, &self.jac_at_inv) {
            (Some(i), Some(j)) => Ok((&i.points, j)),
            _ => Err(Error::Config("operation needs the inverse flow map".into())),
        }
    }

    fn assemble(&self, vals: Vec<[f64; 2]>) -> VelocityField {
        let g = self.eta.grid();
        let n = g.n();
        let mut a = PhysicalField::zeros(g);
        let mut b = PhysicalField::zeros(g);
        for (p, v) in vals.iter().enumerate() {
            a.values_mut()[[p / n, p % n]] = v[0];
            b.values_mut()[[p / n, p % n]] = v[1];
        }
        VelocityField::from_physical(&a, &b)
    }

    /// `Ad_{η^{-1}} w = (Dη)^{-1} (w∘η)`.
    pub fn ad_inverse(&self, w: &VelocityField) -> VelocityField {
        let it = Interpolator::from_fields(&[&w.u[0], &w.u[1]]);
        let s = sample_vector(&it, &self.eta.pos, self.exec);
        let vals = s.iter().zip(&self.eta.jac).map(|(x, a)| matvec(inv2(*a), *x)).collect();
        self.assemble(vals)
    }

    /// `Ad_η w = (Dη w)∘η^{-1}`.
    pub fn ad_forward(&self, w: &VelocityField) -> Result<VelocityField> {
        let (xi, jac) = self.need_inverse()?;
        let it = Interpolator::from_fields(&[&w.u[0], &w.u[1]]);
        let s = sample_vector(&it, xi, self.exec);
        let vals = s.iter().zip(jac).map(|(x, a)| matvec(*a, *x)).collect();
        Ok(self.assemble(vals))
    }

    pub fn ad(&self, w: &VelocityField, dir: AdDirection) -> Result<VelocityField> {
        match dir {
            AdDirection::Forward => self.ad_forward(w),
            AdDirection::Inverse => Ok(self.ad_inverse(w)),
        }
    }

    /// `Ad*_η v = (1 + Δ)^{-1} P(Dη^T (m∘η))` with `m = (1 + Δ) v`.
    pub fn coad(&self, v: &SymplecticVectorField) -> SymplecticVectorField {
        let m = helmholtz(v).velocity();
        let it = Interpolator::from_fields(&[&m.u[0], &m.u[1]]);
        let s = sample_vector(&it, &self.eta.pos, self.exec);
        let vals = s.iter().zip(&self.eta.jac).map(|(x, a)| matvec_t(*a, *x)).collect();
        helmholtz_inv(&project_P(&self.assemble(vals)))
    }

    /// `Ad*_{η^{-1}} w = (1 + Δ)^{-1} P((Dη∘η^{-1})^{-T} (m∘η^{-1}))` with `m = (1 + Δ) w`.
    pub fn coad_inverse(&self, w: &SymplecticVectorField) -> Result<SymplecticVectorField> {
        let (xi, jac) = self.need_inverse()?;
        let m = helmholtz(w).velocity();
        let it = Interpolator::from_fields(&[&m.u[0], &m.u[1]]);
        let s = sample_vector(&it, xi, self.exec);
        let vals = s.iter().zip(jac).map(|(x, a)| matvec_t(inv2(*a), *x)).collect();
        Ok(helmholtz_inv(&project_P(&self.assemble(vals))))
    }
}

/// `Ad_η w` or `Ad_{η^{-1}} w` on the flow map's label lattice.
pub fn ad_group(eta: &FlowMap, w: &VelocityField, dir: AdDirection) -> Result<VelocityField> {
    match dir {
        AdDirection::Inverse => Ok(PreparedFlow::new(eta).ad_inverse(w)),
        AdDirection::Forward => PreparedFlow::with_inverse(eta)?.ad_forward(w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{h1_inner, velocity_h1_inner};

    /// A non-trivial area-preserving map: composition of two shears,
    /// `(x, y) -> (x + a sin y, y)` then `(x, y) -> (x, y + b sin x)`.
    pub(crate) fn shear_map(grid: &Grid2D, a: f64, b: f64) -> FlowMap {
        let pts = lattice_points(grid);
        let mut pos = Vec::new();
        let mut jac = Vec::new();
        for p in pts {
            let x1 = p[0] + a * p[1].sin();
            let y1 = p[1] + b * x1.sin();
            pos.push([x1, y1]);
            let s1 = [1.0, a * p[1].cos(), 0.0, 1.0];
            let s2 = [1.0, 0.0, b * x1.cos(), 1.0];
            jac.push(matmul(s2, s1));
        }
        FlowMap::from_parts(grid, pos, jac, 0.0).unwrap()
    }

    #[test]
    fn shear_map_is_area_preserving() {
        let g = Grid2D::new(16).unwrap();
        assert!(shear_map(&g, 0.5, 0.3).detjac_deviation() < 1e-14);
    }

    #[test]
    fn inverse_of_shear_map() {
        let g = Grid2D::new(32).unwrap();
        let m = shear_map(&g, 0.4, 0.3);
        let inv = m.inverse().unwrap();
        for (xi, y) in inv.points.iter().zip(lattice_points(&g)) {
            // exact inverse: y1 = y - b sin x, x0 = x - a sin y1
            let y1 = y[1] - 0.3 * y[0].sin();
            let x0 = y[0] - 0.4 * y1.sin();
            assert!(wrap(xi[0] - x0).abs() < 1e-10 && wrap(xi[1] - y1).abs() < 1e-10);
        }
        assert!(inv.worst_residual <= NEWTON_TOL);
    }

    #[test]
    fn translation_actions() {
        let g = Grid2D::new(16).unwrap();
        let m = FlowMap::translation(&g, [0.3, -0.2], 1.7);
        let w = SymplecticVectorField::from_modes(&g, &[(1, 2, 1.0, 0.0)], [0.1, 0.0]).unwrap();
        let pf = PreparedFlow::with_inverse(&m).unwrap();
        let back = pf.ad_forward(&pf.ad_inverse(&w.velocity())).unwrap();
        assert!(back.sub(&w.velocity()).h1_norm() < 1e-12);
        // Ad_{η^{-1}} w = w(x + c): a phase shift of every mode
        let c = [0.3 * 1.7, -0.2 * 1.7];
        let shifted = pf.ad_inverse(&w.velocity());
        let ph = num_complex::Complex64::from_polar(1.0, c[0] + 2.0 * c[1]);
        assert!((shifted.u[0].coeff(1, 2) - w.velocity().u[0].coeff(1, 2) * ph).norm() < 1e-13);
    }

    #[test]
    fn forward_and_inverse_actions_are_mutual_inverses() {
        let g = Grid2D::new(32).unwrap();
        let m = shear_map(&g, 0.3, 0.2);
        let pf = PreparedFlow::with_inverse(&m).unwrap();
        let w = SymplecticVectorField::from_modes(&g, &[(1, 0, 1.0, 0.0), (0, 1, 0.0, 0.5)], [0.2, 0.1]).unwrap();
        let there = pf.ad_forward(&w.velocity()).unwrap();
        let back = pf.ad_inverse(&there);
        let rel = back.sub(&w.velocity()).h1_norm() / w.h1_norm();
        assert!(rel < 1e-8, "{rel}");
    }

    #[test]
    fn coadjoint_closed_forms_are_adjoints() {
        let g = Grid2D::new(32).unwrap();
        let m = shear_map(&g, 0.3, 0.2);
        let pf = PreparedFlow::with_inverse(&m).unwrap();
        let v = SymplecticVectorField::from_modes(&g, &[(1, 0, 1.0, 0.3), (1, 1, 0.0, 0.5)], [0.2, 0.1]).unwrap();
        let x = SymplecticVectorField::from_modes(&g, &[(0, 1, 0.4, 0.0), (2, -1, 0.3, 0.1)], [-0.1, 0.3]).unwrap();
        let lhs = h1_inner(&pf.coad(&v), &x);
        let rhs = velocity_h1_inner(&v.velocity(), &pf.ad_forward(&x.velocity()).unwrap());
        assert!((lhs - rhs).abs() < 1e-7 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        let lhs = h1_inner(&pf.coad_inverse(&v).unwrap(), &x);
        let rhs = velocity_h1_inner(&v.velocity(), &pf.ad_inverse(&x.velocity()));
        assert!((lhs - rhs).abs() < 1e-7 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}
