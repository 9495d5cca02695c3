mod common;

use common::*;
use proptest::prelude::*;
use specdisc::rearrange::{partial_rearrange, rearrange_dec, rearrange_inc, repeated_rearrange};
use specdisc::{BigRational, WeightedSample};

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn dec_matches_threshold_oracle(parts in sample_parts(12), k in 1i64..=24) {
        let s = to_sample(&parts);
        let t = frac_of(s.total(), k);
        prop_assert_eq!(rearrange_dec(&s, &t).unwrap(), dec_oracle(s.values(), s.weights(), &t));
    }

    #[test]
    fn scaling(parts in sample_parts(12), k in 1i64..=24, c in 1i64..=20) {
        let s = to_sample(&parts);
        let c = rat(c, 7);
        let scaled = WeightedSample::new(s.values().iter().map(|v| v * &c).collect(), s.weights().to_vec()).unwrap();
        let t = frac_of(s.total(), k);
        prop_assert_eq!(rearrange_dec(&scaled, &t).unwrap(), rearrange_dec(&s, &t).unwrap() * c);
    }

    #[test]
    fn domination(parts in sample_parts(12), bumps in prop::collection::vec(0i64..=5, 12), k in 1i64..=24) {
        let s = to_sample(&parts);
        let big = WeightedSample::new(
            s.values().iter().zip(&bumps).map(|(v, b)| v + rat(*b, 3)).collect(),
            s.weights().to_vec(),
        ).unwrap();
        let t = frac_of(s.total(), k);
        prop_assert!(rearrange_dec(&big, &t).unwrap() >= rearrange_dec(&s, &t).unwrap());
    }

    #[test]
    fn power_exact_square(parts in sample_parts(12), k in 1i64..=24) {
        let s = to_sample(&parts);
        let sq = WeightedSample::new(s.values().iter().map(|v| v * v).collect(), s.weights().to_vec()).unwrap();
        let t = frac_of(s.total(), k);
        let w = rearrange_dec(&s, &t).unwrap();
        prop_assert_eq!(rearrange_dec(&sq, &t).unwrap(), &w * &w);
    }

    #[test]
    fn power_float(values in prop::collection::vec(0.0f64..50.0, 1..12), alpha in 0.1f64..4.0, frac in 0.01f64..1.0) {
        let s = WeightedSample::uniform(values.clone()).unwrap();
        let p = WeightedSample::uniform(values.iter().map(|v| v.powf(alpha)).collect()).unwrap();
        let t = frac * s.total();
        let lhs = rearrange_dec(&p, &t).unwrap();
        let rhs = rearrange_dec(&s, &t).unwrap().powf(alpha);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300));
    }

    #[test]
    fn domain_monotonicity(parts in sample_parts(12), keep in prop::collection::vec(any::<bool>(), 12), k in 1i64..=24) {
        let full = to_sample(&parts);
        let kept: Vec<(i64, i64)> = parts.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
        prop_assume!(!kept.is_empty());
        let sub = to_sample(&kept);
        let t = frac_of(sub.total(), k);
        prop_assert!(rearrange_dec(&sub, &t).unwrap() <= rearrange_dec(&full, &t).unwrap());
    }

    #[test]
    fn monotone_in_t(parts in sample_parts(12), k1 in 1i64..=24, k2 in 1i64..=24) {
        let s = to_sample(&parts);
        let (lo, hi) = (k1.min(k2), k1.max(k2));
        let a = rearrange_dec(&s, &frac_of(s.total(), lo)).unwrap();
        let b = rearrange_dec(&s, &frac_of(s.total(), hi)).unwrap();
        prop_assert!(a >= b);
    }

    #[test]
    fn inc_matches_sublevel_oracle(parts in sample_parts(12), k in 1i64..23) {
        // W_*(t) is the smallest value whose sublevel mass mu(W <= v) reaches t.
        let s = to_sample(&parts);
        let t = frac_of(s.total(), k);
        let got = rearrange_inc(&s, &t).unwrap();
        let want = s.values().iter()
            .filter(|v| {
                let m: BigRational = s.values().iter().zip(s.weights()).filter(|(u, _)| u <= v).map(|(_, w)| w.clone()).sum();
                m >= t
            })
            .min()
            .cloned()
            .unwrap();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn inf_sup(parts in matrix_parts(6)) {
        let f = to_matrix(&parts);
        let min_max = (0..f.rows()).map(|i| (0..f.cols()).map(|j| f.get(i, j).clone()).max().unwrap()).min().unwrap();
        let max_min = (0..f.cols()).map(|j| (0..f.rows()).map(|i| f.get(i, j).clone()).min().unwrap()).max().unwrap();
        prop_assert!(min_max >= max_min);
    }

    #[test]
    fn repeated_matches_oracle(parts in matrix_parts(6), kt in 1i64..=24, ku in 1i64..=24) {
        let f = to_matrix(&parts);
        let t = frac_of(&f.row_mass(), kt);
        let u = frac_of(&f.col_mass(), ku);
        prop_assert_eq!(repeated_rearrange(&f, &t, &u).unwrap(), repeated_oracle(&f, &t, &u));
    }

    #[test]
    fn partial_rearrange_is_per_column(parts in matrix_parts(6), kt in 1i64..=24) {
        let f = to_matrix(&parts);
        let t = frac_of(&f.row_mass(), kt);
        let p = partial_rearrange(&f, &t).unwrap();
        prop_assert_eq!(p.weights(), f.col_weights());
        for j in 0..f.cols() {
            let col: Vec<BigRational> = (0..f.rows()).map(|i| f.get(i, j).clone()).collect();
            prop_assert_eq!(&p.values()[j], &dec_oracle(&col, f.row_weights(), &t));
        }
    }

    #[test]
    fn float_agrees_with_rational(parts in sample_parts(12), k in 1i64..=24) {
        let s = to_sample(&parts);
        let t = frac_of(s.total(), k);
        let sf = WeightedSample::new(
            parts.iter().map(|p| p.0 as f64 / 4.0).collect(),
            parts.iter().map(|p| p.1 as f64 / 6.0).collect(),
        ).unwrap();
        let tf = sf.total() * k as f64 / 24.0;
        let exact = rearrange_dec(&s, &t).unwrap();
        prop_assert_eq!(rearrange_dec(&sf, &tf).unwrap(), num_traits::ToPrimitive::to_f64(&exact).unwrap());
    }
}
