#![allow(dead_code)]

use num_bigint::BigInt;
use proptest::prelude::*;
use specdisc::{BigRational, Matrix2D, WeightedSample};

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Values `a/4` and weights `b/6` as in the crate generators.
pub fn sample_parts(max_len: usize) -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((0i64..=16, 1i64..=12), 1..=max_len)
}

pub fn to_sample(parts: &[(i64, i64)]) -> WeightedSample<BigRational> {
    WeightedSample::new(parts.iter().map(|p| rat(p.0, 4)).collect(), parts.iter().map(|p| rat(p.1, 6)).collect())
        .unwrap()
}

/// `t = total * k / 24` for `k in 1..=24`.
pub fn frac_of(total: &BigRational, k: i64) -> BigRational {
    total * rat(k, 24)
}

/// `sup{s > 0 : mu(W >= s) >= t}` over the threshold grid of sample values.
pub fn dec_oracle(values: &[BigRational], weights: &[BigRational], t: &BigRational) -> BigRational {
    let zero = rat(0, 1);
    let mut best = zero.clone();
    for s in values.iter().filter(|s| **s > zero) {
        let mass: BigRational = values.iter().zip(weights).filter(|(v, _)| *v >= s).map(|(_, w)| w.clone()).sum();
        if mass >= *t && *s > best {
            best = s.clone();
        }
    }
    best
}

/// Two-stage oracle for `(F^*)^*(t, u)` written against the definition.
pub fn repeated_oracle(f: &Matrix2D<BigRational>, t: &BigRational, u: &BigRational) -> BigRational {
    let cols: Vec<BigRational> = (0..f.cols())
        .map(|j| {
            let col: Vec<BigRational> = (0..f.rows()).map(|i| f.get(i, j).clone()).collect();
            dec_oracle(&col, f.row_weights(), t)
        })
        .collect();
    dec_oracle(&cols, f.col_weights(), u)
}

pub fn matrix_parts(max: usize) -> impl Strategy<Value = (Vec<i64>, Vec<i64>, Vec<i64>)> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        (prop::collection::vec(1i64..=6, r), prop::collection::vec(1i64..=6, c), prop::collection::vec(0i64..=5, r * c))
    })
}

pub fn to_matrix(parts: &(Vec<i64>, Vec<i64>, Vec<i64>)) -> Matrix2D<BigRational> {
    let (rw, cw, e) = parts;
    Matrix2D::new(
        rw.iter().map(|w| rat(*w, 3)).collect(),
        cw.iter().map(|w| rat(*w, 2)).collect(),
        e.iter().map(|v| rat(*v, 1)).collect(),
    )
    .unwrap()
}

/// Property-test settings without on-disk failure persistence.
pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}
