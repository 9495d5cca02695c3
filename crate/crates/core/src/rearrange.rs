//! Non-increasing and non-decreasing rearrangements of weighted samples,
//! and the partial and repeated rearrangements of two-variable functions.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Above this many matrix entries `partial_rearrange` runs columns in parallel.
const PAR_THRESHOLD: usize = 1 << 14;

/// Finite atoms `(value, weight)`; the discrete stand-in for `(W, mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample<T> {
    values: Vec<T>,
    weights: Vec<T>,
    total: T,
}

impl<T: Scalar> WeightedSample<T> {
    pub fn new(values: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if values.len() != weights.len() {
            return invalid(format!("{} values but {} weights", values.len(), weights.len()));
        }
        if values.is_empty() {
            return invalid("empty sample");
        }
        if values.iter().any(|v| !v.is_finite_value() || *v < T::zero()) {
            return invalid("values must be finite and non-negative");
        }
        if weights.iter().any(|w| !w.is_finite_value() || *w < T::zero()) {
            return invalid("weights must be finite and non-negative");
        }
        let total = weights.iter().fold(T::zero(), |a, w| a + w.clone());
        if total <= T::zero() {
            return invalid("total mass must be positive");
        }
        Ok(WeightedSample { values, weights, total })
    }

    /// Unit weights.
    pub fn uniform(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![T::one(); n])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
    pub fn total(&self) -> &T {
        &self.total
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distinct values in descending order with cumulative masses.
    pub fn dec_profile(&self) -> DecreasingProfile<T> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.values[b].partial_cmp(&self.values[a]).expect("finite"));
        let mut levels: Vec<T> = Vec::new();
        let mut cumulative: Vec<T> = Vec::new();
        let mut acc = T::zero();
        for i in order {
            acc = acc + self.weights[i].clone();
            if levels.last() == Some(&self.values[i]) {
                *cumulative.last_mut().unwrap() = acc.clone();
            } else {
                levels.push(self.values[i].clone());
                cumulative.push(acc.clone());
            }
        }
        DecreasingProfile { levels, cumulative, total: self.total.clone() }
    }
}

/// The step function `lambda^*` in tabulated form.
#[derive(Debug, Clone)]
pub struct DecreasingProfile<T> {
    pub levels: Vec<T>,
    pub cumulative: Vec<T>,
    total: T,
}

impl<T: Scalar> DecreasingProfile<T> {
    /// `W^*(t)`: the first level whose cumulative mass reaches `t`.
    pub fn value_at(&self, t: &T) -> Result<T> {
        check_t(t, &self.total)?;
        if self.levels.iter().all(|v| v.is_zero()) {
            return Ok(T::zero());
        }
        let k = self.cumulative.partition_point(|c| !c.mass_reaches(t));
        if k < self.levels.len() {
            return Ok(self.levels[k].clone());
        }
        // t above the last cumulative only through float rounding.
        let last = self
            .cumulative
            .iter()
            .enumerate()
            .rev()
            .find(|(i, c)| *i == 0 || **c > self.cumulative[i - 1])
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(self.levels[last].clone())
    }
}

fn check_t<T: Scalar>(t: &T, total: &T) -> Result<()> {
    if *t <= T::zero() || !t.approx_le(total) {
        return invalid(format!("t = {t:?} outside (0, {total:?}]"));
    }
    Ok(())
}

/// `W^*(t) = sup{s > 0 : mu(W >= s) >= t}`.
pub fn rearrange_dec<T: Scalar>(sample: &WeightedSample<T>, t: &T) -> Result<T> {
    check_t(t, sample.total())?;
    let mut atoms: Vec<(T, T)> = sample.values.iter().cloned().zip(sample.weights.iter().cloned()).collect();
    Ok(dec_in_place(&mut atoms, t))
}

/// `W_*(t) = sup{s > 0 : mu(W < s) < t}`.
pub fn rearrange_inc<T: Scalar>(sample: &WeightedSample<T>, t: &T) -> Result<T> {
    check_t(t, sample.total())?;
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.sort_by(|&a, &b| sample.values[a].partial_cmp(&sample.values[b]).expect("finite"));
    let mut acc = T::zero();
    let mut last_positive = order[order.len() - 1];
    for &i in &order {
        acc = acc + sample.weights[i].clone();
        if sample.weights[i] > T::zero() {
            last_positive = i;
        }
        if acc.mass_reaches(t) {
            return Ok(sample.values[i].clone());
        }
    }
    Ok(sample.values[last_positive].clone())
}

/// Weighted upper quantile on an unsorted atom list; `t` must be validated.
fn dec_in_place<T: Scalar>(atoms: &mut [(T, T)], t: &T) -> T {
    atoms.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite"));
    let mut acc = T::zero();
    let mut fallback = T::zero();
    let mut i = 0;
    while i < atoms.len() {
        // merge a tie bucket before testing the cumulative mass
        let v = atoms[i].0.clone();
        let mut bucket = T::zero();
        while i < atoms.len() && atoms[i].0 == v {
            bucket = bucket + atoms[i].1.clone();
            i += 1;
        }
        acc = acc + bucket.clone();
        if bucket > T::zero() {
            fallback = v.clone();
        }
        if acc.mass_reaches(t) {
            return v;
        }
    }
    fallback
}

/// Non-negative `F(x, s)` stored row-major, rows weighted by `mu`, columns by `nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2D<T> {
    row_weights: Vec<T>,
    col_weights: Vec<T>,
    entries: Vec<T>,
}

impl<T: Scalar> Matrix2D<T> {
    pub fn new(row_weights: Vec<T>, col_weights: Vec<T>, entries: Vec<T>) -> Result<Self> {
        if row_weights.is_empty() || col_weights.is_empty() {
            return invalid("matrix needs at least one row and one column");
        }
        if entries.len() != row_weights.len() * col_weights.len() {
            return invalid(format!(
                "{} entries for a {}x{} matrix",
                entries.len(),
                row_weights.len(),
                col_weights.len()
            ));
        }
        if entries.iter().any(|v| !v.is_finite_value() || *v < T::zero()) {
            return invalid("entries must be finite and non-negative");
        }
        for w in row_weights.iter().chain(&col_weights) {
            if !w.is_finite_value() || *w < T::zero() {
                return invalid("weights must be finite and non-negative");
            }
        }
        Ok(Matrix2D { row_weights, col_weights, entries })
    }

    pub fn from_fn(row_weights: Vec<T>, col_weights: Vec<T>, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let (r, c) = (row_weights.len(), col_weights.len());
        let entries = (0..r * c).map(|k| f(k / c, k % c)).collect();
        Self::new(row_weights, col_weights, entries)
    }

    pub fn rows(&self) -> usize {
        self.row_weights.len()
    }
    pub fn cols(&self) -> usize {
        self.col_weights.len()
    }
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.entries[i * self.cols() + j]
    }
    pub fn row_weights(&self) -> &[T] {
        &self.row_weights
    }
    pub fn col_weights(&self) -> &[T] {
        &self.col_weights
    }
    pub fn row_mass(&self) -> T {
        self.row_weights.iter().fold(T::zero(), |a, w| a + w.clone())
    }
    pub fn col_mass(&self) -> T {
        self.col_weights.iter().fold(T::zero(), |a, w| a + w.clone())
    }

    /// The swapped function `G(s, x) = F(x, s)`.
    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let entries = (0..r * c).map(|k| self.get(k % r, k / r).clone()).collect();
        Matrix2D { row_weights: self.col_weights.clone(), col_weights: self.row_weights.clone(), entries }
    }
}

/// Column-wise `F^*(t, s)` in the row variable, weighted by the column measure.
pub fn partial_rearrange<T: Scalar>(f: &Matrix2D<T>, t: &T) -> Result<WeightedSample<T>> {
    check_t(t, &f.row_mass())?;
    let column = |j: usize| {
        let mut atoms: Vec<(T, T)> = (0..f.rows()).map(|i| (f.get(i, j).clone(), f.row_weights[i].clone())).collect();
        dec_in_place(&mut atoms, t)
    };
    let values: Vec<T> = if f.entries.len() >= PAR_THRESHOLD {
        (0..f.cols()).into_par_iter().map(column).collect()
    } else {
        (0..f.cols()).map(column).collect()
    };
    WeightedSample::new(values, f.col_weights.clone())
}

/// `(F^*)^*(t, u)`: the column profile of [`partial_rearrange`] rearranged again.
pub fn repeated_rearrange<T: Scalar>(f: &Matrix2D<T>, t: &T, u: &T) -> Result<T> {
    check_t(u, &f.col_mass())?;
    let partial = partial_rearrange(f, t)?;
    rearrange_dec(&partial, u)
}
