mod common;

use common::{config, rat};
use proptest::prelude::*;
use specdisc::measure_space::build_cube_grid;
use specdisc::partitions::{cantor_level, cantor_system, product_system, verify_dense_system, witness_is_sound};
use specdisc::potentials::{cantor_level_of, v_alpha, y_kernel_matrix};
use specdisc::{BigRational, PotentialSpec, ValphaParams};

#[test]
fn cantor_levels_are_pairwise_disjoint() {
    let mut all: Vec<(u32, (BigRational, BigRational))> = Vec::new();
    for n in 1..=8 {
        all.extend(cantor_level(n).unwrap().into_iter().map(|iv| (n, iv)));
    }
    all.sort_by(|a, b| a.1 .0.cmp(&b.1 .0));
    for w in all.windows(2) {
        assert!(w[0].1 .1 < w[1].1 .0, "levels {} and {} overlap", w[0].0, w[1].0);
    }
}

#[test]
fn gap_points_have_a_unique_level() {
    for n in 1..=10u32 {
        for (a, b) in cantor_level(n).unwrap() {
            for (p, q) in [(1, 2), (1, 7), (6, 7)] {
                let x = &a + (&b - &a) * rat(p, q);
                let xf = num_traits::ToPrimitive::to_f64(&x).unwrap();
                assert_eq!(cantor_level_of(xf), Some(n), "x = {x}");
            }
        }
    }
}

#[test]
fn witnesses_are_sound() {
    let cantor = cantor_system(14).unwrap();
    let report = verify_dense_system(&cantor, 300, 7);
    assert!(report.trials.iter().filter(|t| t.passed()).all(|t| witness_is_sound(&cantor, t)));
    let prod = product_system(&cantor_system(10).unwrap(), 3).unwrap();
    let report = verify_dense_system(&prod, 100, 7);
    assert!(report.all_pass());
    assert!(report.trials.iter().all(|t| witness_is_sound(&prod, t)));
}

#[test]
fn verifier_is_deterministic() {
    let cantor = cantor_system(12).unwrap();
    assert_eq!(verify_dense_system(&cantor, 200, 11), verify_dense_system(&cantor, 200, 11));
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn valpha_nonnegative_with_few_values(l in prop::collection::vec(-6i64..=6, 3), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let params = ValphaParams::new(3, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<u64> = Vec::new();
        let mut levels: Vec<u32> = Vec::new();
        for _ in 0..2000 {
            let x: Vec<f64> = l.iter().map(|li| *li as f64 + rng.gen_range(1e-9..1.0)).collect();
            let v = v_alpha(&params, &x).unwrap();
            prop_assert!(v >= 0.0);
            values.push(v.to_bits());
            if let Some(n) = cantor_level_of(x[0] - l[0] as f64) {
                levels.push(n);
            }
        }
        values.sort_unstable();
        values.dedup();
        levels.sort_unstable();
        levels.dedup();
        prop_assert!(values.len() <= (2 * levels.len()).max(1), "{} values over {} levels", values.len(), levels.len());
    }

    #[test]
    fn y_scales_linearly(seed in any::<u64>(), c in 0.1f64..20.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let space = build_cube_grid(&[0.5, 0.5, 0.5], 0.5, 3).unwrap();
        let vals: Vec<f64> = (0..space.len()).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..5.0) }).collect();
        let v = PotentialSpec::grid(space.clone(), vals).unwrap();
        let y = y_kernel_matrix(&v, &space, &space).unwrap();
        for (factor, exact) in [(4.0, true), (0.25, true), (c, false)] {
            let ys = y_kernel_matrix(&v.scaled(factor).unwrap(), &space, &space).unwrap();
            for i in 0..y.rows() {
                for j in 0..y.cols() {
                    let (a, b) = (*ys.get(i, j), factor * *y.get(i, j));
                    if exact {
                        prop_assert_eq!(a, b);
                    } else {
                        prop_assert!((a - b).abs() <= 1e-12 * b.abs());
                    }
                }
            }
        }
    }
}
