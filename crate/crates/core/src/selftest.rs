//! Seeded randomized checks of the discrete operators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fields::{h1_inner, helmholtz, helmholtz_inv, project_P, velocity_h1_inner, SymplecticVectorField, VelocityField};
use crate::geodesic::rhs_direct;
use crate::lie::{ad, ad_star};
use crate::report::Check;
use crate::spectral::{Grid2D, SpectrumField, AREA};
use crate::Result;

/// Random real stream terms `(k1, k2, a, b)` on the dealiased band, with
/// amplitudes decaying like `1 / (1 + |k|^2)`.
fn random_modes(grid: &Grid2D, rng: &mut impl Rng) -> Vec<(i64, i64, f64, f64)> {
    let b = grid.dealias_band() as i64;
    let mut modes = Vec::new();
    for k1 in 0..=b {
        for k2 in -b..=b {
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            let w = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
            modes.push((k1, k2, w * rng.gen_range(-1.0..1.0), w * rng.gen_range(-1.0..1.0)));
        }
    }
    modes
}

/// A random symplectic field on the dealiased band with a random harmonic part.
pub fn random_field(grid: &Grid2D, rng: &mut impl Rng) -> Result<SymplecticVectorField> {
    let modes = random_modes(grid, rng);
    let h = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    SymplecticVectorField::from_modes(grid, &modes, h)
}

/// A random ambient (not divergence-free) field on the dealiased band.
pub fn random_velocity(grid: &Grid2D, rng: &mut impl Rng) -> Result<VelocityField> {
    let mut u = [SpectrumField::from_modes(grid, &random_modes(grid, rng))?, SpectrumField::from_modes(grid, &random_modes(grid, rng))?];
    for c in &mut u {
        c.coeffs_mut()[[0, 0]] = rng.gen_range(-1.0..1.0f64).into();
    }
    Ok(VelocityField { u })
}

/// Worst normalized defect of `<ad*_v w, x>_1 = <w, ad_v x>_1` over `trials`
/// random triples.
pub fn adjointness(grid: &Grid2D, seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v = random_field(grid, &mut rng)?;
        let w = random_field(grid, &mut rng)?;
        let x = random_field(grid, &mut rng)?;
        let lhs = h1_inner(&ad_star(&v, &w), &x);
        let rhs = h1_inner(&w, &ad(&v, &x));
        worst = worst.max((lhs - rhs).abs() / (v.h1_norm() * w.h1_norm() * x.h1_norm()));
    }
    Ok(worst)
}

/// Operator identities on `trials` seeded random inputs.
pub fn run(grid: &Grid2D, seed: u64, trials: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let (mut anti, mut idem, mut selfadj, mut helm, mut parseval, mut direct) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let v = random_field(grid, &mut rng)?;
        let w = random_field(grid, &mut rng)?;
        let u = random_velocity(grid, &mut rng)?;
        let (nv, nw) = (v.h1_norm(), w.h1_norm());
        anti = anti.max(ad(&v, &w).add(&ad(&w, &v)).h1_norm() / (nv * nw));
        let pu = project_P(&u);
        idem = idem.max(project_P(&pu.velocity()).sub(&pu).h1_norm() / u.h1_norm());
        selfadj = selfadj.max((h1_inner(&pu, &w) - velocity_h1_inner(&u, &w.velocity())).abs() / (u.h1_norm() * nw));
        helm = helm.max(helmholtz_inv(&helmholtz(&v)).sub(&v).h1_norm() / nv);
        let f = v.stream();
        let phys: f64 = f.inverse().values().iter().map(|x| x * x).sum::<f64>() * grid.spacing().powi(2);
        parseval = parseval.max((phys - AREA * f.power()).abs() / (AREA * f.power()));
        direct = direct.max(rhs_direct(&v).add(&ad_star(&v, &v)).h1_norm() / (nv * nv));
    }
    Ok(vec![
        Check::below("coadjoint_adjointness", adjointness(grid, seed, trials)?, 1e-11),
        Check::below("ad_antisymmetry", anti, 1e-12),
        Check::below("projection_idempotent", idem, 1e-13),
        Check::below("projection_self_adjoint", selfadj, 1e-12),
        Check::below("helmholtz_round_trip", helm, 1e-13),
        Check::below("parseval", parseval, 1e-12),
        Check::below("direct_equals_coadjoint", direct, 1e-11),
    ])
}
