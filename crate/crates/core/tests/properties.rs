//! Randomized properties of the spectral primitives and the operator calculus.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sympflow::fields::{h1_inner, j_rot, omega, project_P, SymplecticVectorField, VelocityField};
use sympflow::lie::{ad, ad_star, k_op};
use sympflow::selftest::{random_field, random_velocity};
use sympflow::spectral::{dealiased_product, Axis, Grid2D, Multiplier, PhysicalField, SpectrumField};

const MULTIPLIERS: [Multiplier; 6] = [
    Multiplier::LapPos,
    Multiplier::Helmholtz,
    Multiplier::HelmholtzInv,
    Multiplier::LapPosInv,
    Multiplier::Grad(Axis::X),
    Multiplier::Grad(Axis::Y),
];

fn grid(n: usize) -> Grid2D {
    Grid2D::new(n).unwrap()
}

fn fields(n: usize, seed: u64, count: usize) -> Vec<SymplecticVectorField> {
    let g = grid(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_field(&g, &mut rng).unwrap()).collect()
}

fn spectrum_distance(a: &SpectrumField, b: &SpectrumField) -> f64 {
    a.sub(b).max_abs()
}

fn hermitian_defect(s: &SpectrumField) -> f64 {
    let g = s.grid();
    let c = s.coeffs();
    let n = g.n();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (c[[i, j]], c[[g.neg_index(i), g.neg_index(j)]].conj());
            worst = worst.max((a - b).norm());
        }
    }
    worst
}

fn l2_pairing(a: &VelocityField, b: &VelocityField) -> f64 {
    let (pa, pb) = (a.physical(), b.physical());
    let h2 = a.grid().spacing().powi(2);
    (0..2).map(|c| pa[c].values().iter().zip(pb[c].values()).map(|(x, y)| x * y).sum::<f64>()).sum::<f64>() * h2
}

fn even_grid() -> impl Strategy<Value = usize> {
    prop_oneof![Just(8usize), Just(16), Just(24), Just(32)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wavenumber_layout_round_trips(n in (4usize..40).prop_map(|h| 2 * h)) {
        let g = grid(n);
        for i in 0..n {
            prop_assert_eq!(g.index(g.wavenumber(i)), Some(i));
        }
    }

    #[test]
    fn parseval(n in even_grid(), seed in any::<u64>()) {
        let f = fields(n, seed, 1).pop().unwrap();
        let s = f.stream();
        let p = s.inverse();
        let mean_sq = p.values().iter().map(|x| x * x).sum::<f64>() / (n * n) as f64;
        prop_assert!((mean_sq - s.power()).abs() <= 1e-12 * s.power());
    }

    #[test]
    fn transform_round_trip(n in even_grid(), a in -2.0..2.0f64, phase in 0.0..6.3f64) {
        let p = PhysicalField::from_fn(&grid(n), |x, y| (a * (x + phase).sin() + 2.0 * y.cos()).exp());
        let back = p.forward().inverse();
        let err = p.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 10.0 * f64::EPSILON * p.max_abs() * n as f64);
    }

    #[test]
    fn multipliers_commute(n in even_grid(), seed in any::<u64>(), a in 0usize..6, b in 0usize..6) {
        let s = fields(n, seed, 1).pop().unwrap().stream().clone();
        let (ma, mb) = (MULTIPLIERS[a], MULTIPLIERS[b]);
        let ab = s.apply(ma).apply(mb);
        let ba = s.apply(mb).apply(ma);
        prop_assert!(spectrum_distance(&ab, &ba) <= 4.0 * f64::EPSILON * ab.max_abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn helmholtz_inverse_undoes_helmholtz(n in even_grid(), seed in any::<u64>()) {
        let s = fields(n, seed, 1).pop().unwrap().stream().clone();
        prop_assert!(spectrum_distance(&s.apply(Multiplier::Helmholtz).apply(Multiplier::HelmholtzInv), &s) <= 1e-15 * s.max_abs());
    }

    #[test]
    fn hermitian_symmetry_is_preserved(n in even_grid(), seed in any::<u64>(), a in 0usize..6) {
        let f = fields(n, seed, 2);
        let s = f[0].stream().apply(MULTIPLIERS[a]);
        prop_assert!(hermitian_defect(&s) <= 1e-15 * s.max_abs().max(1.0));
        let p = dealiased_product(f[0].stream(), f[1].stream());
        prop_assert!(hermitian_defect(&p) <= 1e-15 * p.max_abs().max(1.0));
        prop_assert!(hermitian_defect(&f[0].velocity().u[0]) <= 1e-15);
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint(n in even_grid(), seed in any::<u64>()) {
        let g = grid(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_velocity(&g, &mut rng).unwrap();
        let w = random_velocity(&g, &mut rng).unwrap();
        let pu = project_P(&u);
        prop_assert!(project_P(&pu.velocity()).sub(&pu).h1_norm() <= 1e-13 * u.h1_norm());
        let lhs = l2_pairing(&pu.velocity(), &w);
        let rhs = l2_pairing(&u, &project_P(&w).velocity());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * u.l2_norm() * w.l2_norm());
    }

    #[test]
    fn symplectic_fields_are_orthogonal_to_gradients(n in even_grid(), seed in any::<u64>()) {
        let f = fields(n, seed, 2);
        let s = f[1].stream();
        let grad = VelocityField { u: [s.apply(Multiplier::Grad(Axis::X)), s.apply(Multiplier::Grad(Axis::Y))] };
        let w = f[0].velocity();
        prop_assert!(l2_pairing(&w, &grad).abs() <= 1e-12 * w.l2_norm() * grad.l2_norm());
    }

    #[test]
    fn h1_inner_is_positive_definite(n in even_grid(), seed in any::<u64>()) {
        let f = fields(n, seed, 1).pop().unwrap();
        let h = f.harmonic();
        let floor = sympflow::spectral::AREA * (h[0] * h[0] + h[1] * h[1]);
        prop_assert!(h1_inner(&f, &f) > 0.0);
        prop_assert!(h1_inner(&f, &f) >= floor);
    }

    #[test]
    fn rotation_is_compatible_with_the_symplectic_form(a in prop::array::uniform2(-10.0..10.0f64), b in prop::array::uniform2(-10.0..10.0f64)) {
        let jb = j_rot(b);
        prop_assert!((omega(a, b) - (a[0] * jb[0] + a[1] * jb[1])).abs() <= 1e-12);
        let jjb = j_rot(jb);
        prop_assert_eq!(jjb, [-b[0], -b[1]]);
    }

    #[test]
    fn ad_and_coadjoint_are_bilinear(seed in any::<u64>(), s in -3.0..3.0f64) {
        let f = fields(16, seed, 3);
        let (u, v, w) = (&f[0], &f[1], &f[2]);
        let mut uv = u.clone();
        uv.axpy(s, v);
        for op in [ad, ad_star] {
            let mut lin = op(u, w);
            lin.axpy(s, &op(v, w));
            let scale = (u.h1_norm() + s.abs() * v.h1_norm()) * w.h1_norm();
            prop_assert!(op(&uv, w).sub(&lin).h1_norm() <= 1e-13 * scale);
            let mut lin = op(w, u);
            lin.axpy(s, &op(w, v));
            prop_assert!(op(w, &uv).sub(&lin).h1_norm() <= 1e-13 * scale);
        }
    }

    #[test]
    fn coadjoint_is_the_h1_adjoint_of_ad(n in prop_oneof![Just(16usize), Just(32)], seed in any::<u64>()) {
        let f = fields(n, seed, 3);
        let (v, w, x) = (&f[0], &f[1], &f[2]);
        let lhs = h1_inner(&ad_star(v, w), x);
        let rhs = h1_inner(w, &ad(v, x));
        prop_assert!((lhs - rhs).abs() <= 1e-11 * v.h1_norm() * w.h1_norm() * x.h1_norm());
    }

    #[test]
    fn k_op_swaps_arguments(seed in any::<u64>()) {
        let f = fields(16, seed, 2);
        prop_assert!(k_op(&f[0], &f[1]).sub(&ad_star(&f[1], &f[0])).h1_norm() == 0.0);
    }

    #[test]
    fn ad_is_antisymmetric(seed in any::<u64>()) {
        let f = fields(24, seed, 2);
        let s = ad(&f[0], &f[1]).add(&ad(&f[1], &f[0]));
        prop_assert!(s.h1_norm() <= 1e-12 * f[0].h1_norm() * f[1].h1_norm());
        prop_assert_eq!(ad(&f[0], &f[1]).harmonic(), [0.0, 0.0]);
    }
}
