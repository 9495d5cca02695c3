//! Set functions on finite ground sets: Choquet integrals, duals and the
//! base polyhedron.

use std::io::{Read, Write};
use std::sync::OnceLock;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

pub const MAX_GROUND: usize = 20;
/// Largest ground set for the exhaustive ordering sweep.
pub const MAX_EXHAUSTIVE: usize = 8;

/// Values on all `2^n` subsets, indexed by bitmask, with `v(empty) = 0`.
#[derive(Debug)]
pub struct MonotoneSetFunction<T> {
    n: usize,
    table: Vec<T>,
    monotone: OnceLock<bool>,
    submodular: OnceLock<bool>,
}

impl<T: Clone> Clone for MonotoneSetFunction<T> {
    fn clone(&self) -> Self {
        MonotoneSetFunction {
            n: self.n,
            table: self.table.clone(),
            monotone: self.monotone.clone(),
            submodular: self.submodular.clone(),
        }
    }
}

impl<T: Scalar> MonotoneSetFunction<T> {
    pub fn new(n: usize, table: Vec<T>) -> Result<Self> {
        if n > MAX_GROUND {
            return Err(Error::Capacity(format!("ground set of {n} exceeds {MAX_GROUND}")));
        }
        if table.len() != 1 << n {
            return invalid(format!("table has {} entries, expected {}", table.len(), 1usize << n));
        }
        if !table[0].is_zero() {
            return invalid("v(empty set) must be 0");
        }
        if table.iter().any(|v| !v.is_finite_value()) {
            return invalid("non-finite table entry");
        }
        Ok(MonotoneSetFunction { n, table, monotone: OnceLock::new(), submodular: OnceLock::new() })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> T) -> Result<Self> {
        if n > MAX_GROUND {
            return Err(Error::Capacity(format!("ground set of {n} exceeds {MAX_GROUND}")));
        }
        Self::new(n, (0..1usize << n).map(f).collect())
    }

    /// `v(A) = sum_{i in A} mu_i`.
    pub fn additive(mu: &[T]) -> Result<Self> {
        Self::from_fn(mu.len(), |m| (0..mu.len()).filter(|i| m >> i & 1 == 1).fold(T::zero(), |a, i| a + mu[i].clone()))
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }
    pub fn full(&self) -> usize {
        (1 << self.n) - 1
    }
    pub fn value(&self, mask: usize) -> &T {
        &self.table[mask]
    }
    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn is_monotone(&self) -> bool {
        *self.monotone.get_or_init(|| {
            (0..self.table.len())
                .all(|a| (0..self.n).all(|i| a >> i & 1 == 1 || self.table[a] <= self.table[a | 1 << i]))
        })
    }

    /// Diminishing increments `v(A+i) + v(A+j) >= v(A+i+j) + v(A)`, equivalent
    /// to the lattice inequality over all pairs.
    pub fn is_submodular(&self) -> bool {
        *self.submodular.get_or_init(|| {
            let n = self.n;
            (0..self.table.len()).all(|a| {
                (0..n).filter(|i| a >> i & 1 == 0).all(|i| {
                    (i + 1..n).filter(|j| a >> j & 1 == 0).all(|j| {
                        let lhs = self.table[a | 1 << i].clone() + self.table[a | 1 << j].clone();
                        let rhs = self.table[a | 1 << i | 1 << j].clone() + self.table[a].clone();
                        rhs.approx_le(&lhs)
                    })
                })
            })
        })
    }

    /// `v^*(A) = v(N) - v(N \ A)`.
    pub fn dual(&self) -> Self {
        let full = self.full();
        let top = self.table[full].clone();
        let table = (0..self.table.len()).map(|a| top.clone() - self.table[full ^ a].clone()).collect();
        MonotoneSetFunction { n: self.n, table, monotone: OnceLock::new(), submodular: OnceLock::new() }
    }

    fn require_submodular_monotone(&self) -> Result<()> {
        if !self.is_monotone() || !self.is_submodular() {
            return Err(Error::Precondition("set function must be monotone and submodular".into()));
        }
        Ok(())
    }

    /// Reads `bitmask,value` rows; every subset must appear exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows: Vec<(usize, T)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse("expected `bitmask,value`".into()));
            }
            let mask = rec[0].trim().parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?;
            rows.push((mask, T::parse_scalar(&rec[1])?));
        }
        let len = rows.len();
        if !len.is_power_of_two() {
            return Err(Error::Parse(format!("{len} rows is not a power of two")));
        }
        let n = len.trailing_zeros() as usize;
        let mut table: Vec<Option<T>> = vec![None; len];
        for (m, v) in rows {
            if m >= len || table[m].is_some() {
                return Err(Error::Parse(format!("bad or repeated bitmask {m}")));
            }
            table[m] = Some(v);
        }
        Self::new(n, table.into_iter().map(Option::unwrap).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W, fmt: impl Fn(&T) -> String) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bitmask", "value"])?;
        for (m, v) in self.table.iter().enumerate() {
            w.write_record([m.to_string(), fmt(v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A non-negative measure on the ground set.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasureVector<T>(Vec<T>);

impl<T: Scalar> FiniteMeasureVector<T> {
    pub fn new(mu: Vec<T>) -> Result<Self> {
        if mu.iter().any(|m| *m < T::zero() || !m.is_finite_value()) {
            return invalid("measure entries must be finite and non-negative");
        }
        Ok(FiniteMeasureVector(mu))
    }
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
    pub fn mass(&self, mask: usize) -> T {
        self.0.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).fold(T::zero(), |a, (_, m)| a + m.clone())
    }
    pub fn pair(&self, f: &[T]) -> T {
        self.0.iter().zip(f).fold(T::zero(), |a, (m, x)| a + m.clone() * x.clone())
    }
}

fn check_integrand<T: Scalar>(v: &MonotoneSetFunction<T>, f: &[T]) -> Result<()> {
    if f.len() != v.ground_size() {
        return invalid(format!("integrand has {} entries, ground set {}", f.len(), v.ground_size()));
    }
    if f.iter().any(|x| *x < T::zero() || !x.is_finite_value()) {
        return invalid("integrand must be finite and non-negative");
    }
    Ok(())
}

/// Layer-cake integral `int_0^inf v({F >= s}) ds`.
pub fn choquet_integral<T: Scalar>(v: &MonotoneSetFunction<T>, f: &[T]) -> Result<T> {
    check_integrand(v, f)?;
    if !v.is_monotone() {
        return Err(Error::Precondition("set function must be monotone".into()));
    }
    let order = descending(f);
    let mut acc = T::zero();
    let mut mask = 0usize;
    for (k, &i) in order.iter().enumerate() {
        mask |= 1 << i;
        let next = order.get(k + 1).map_or(T::zero(), |&j| f[j].clone());
        acc = acc + (f[i].clone() - next) * v.value(mask).clone();
    }
    Ok(acc)
}

fn descending<T: Scalar>(f: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[b].partial_cmp(&f[a]).unwrap().then(a.cmp(&b)));
    order
}

/// Marginal increments of `v` along the prefixes of `ordering`.
pub fn greedy_base_vertex<T: Scalar>(v: &MonotoneSetFunction<T>, ordering: &[usize]) -> Result<FiniteMeasureVector<T>> {
    v.require_submodular_monotone()?;
    let n = v.ground_size();
    let mut seen = vec![false; n];
    if ordering.len() != n || ordering.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return invalid("ordering must be a permutation of the ground set");
    }
    let mut mu = vec![T::zero(); n];
    let mut mask = 0usize;
    for &i in ordering {
        let prev = v.value(mask).clone();
        mask |= 1 << i;
        mu[i] = v.value(mask).clone() - prev;
    }
    FiniteMeasureVector::new(mu)
}

/// `mu(A) <= v(A)` for all `A` and `mu(N) = v(N)`.
pub fn in_base_polyhedron<T: Scalar>(mu: &FiniteMeasureVector<T>, v: &MonotoneSetFunction<T>) -> bool {
    if mu.as_slice().len() != v.ground_size() {
        return false;
    }
    let masses = subset_masses(mu);
    masses[v.full()].approx_eq(v.value(v.full())) && masses.iter().zip(v.table()).all(|(m, c)| m.approx_le(c))
}

/// `mu(A) >= v^*(A)` for all `A` and `mu(N) = v^*(N)`.
pub fn in_core_star<T: Scalar>(mu: &FiniteMeasureVector<T>, v: &MonotoneSetFunction<T>) -> bool {
    if mu.as_slice().len() != v.ground_size() {
        return false;
    }
    let dual = v.dual();
    let masses = subset_masses(mu);
    masses[v.full()].approx_eq(dual.value(v.full())) && masses.iter().zip(dual.table()).all(|(m, c)| c.approx_le(m))
}

fn subset_masses<T: Scalar>(mu: &FiniteMeasureVector<T>) -> Vec<T> {
    let n = mu.as_slice().len();
    let mut out = vec![T::zero(); 1 << n];
    for m in 1..1usize << n {
        let low = m.trailing_zeros() as usize;
        out[m] = out[m & (m - 1)].clone() + mu.as_slice()[low].clone();
    }
    out
}

#[derive(Debug, Clone)]
pub struct BpMax<T> {
    /// Max over all `n!` greedy vertices (`n <= 8`) and a maximizing ordering.
    pub exhaustive: Option<(T, Vec<usize>)>,
    /// Value at the greedy vertex of the `F`-descending ordering.
    pub greedy: T,
}

/// `max_{mu in BP(v)} <mu, F>`, both by ordering sweep and by the greedy vertex.
pub fn base_polyhedron_max<T: Scalar>(v: &MonotoneSetFunction<T>, f: &[T]) -> Result<BpMax<T>> {
    check_integrand(v, f)?;
    v.require_submodular_monotone()?;
    let n = v.ground_size();
    let greedy = greedy_base_vertex(v, &descending(f))?.pair(f);
    let exhaustive = if n <= MAX_EXHAUSTIVE {
        let mut best: Option<(T, Vec<usize>)> = None;
        for perm in (0..n).permutations(n) {
            let val = greedy_base_vertex(v, &perm)?.pair(f);
            if best.as_ref().map_or(true, |(b, _)| val > *b) {
                best = Some((val, perm));
            }
        }
        best
    } else {
        None
    };
    Ok(BpMax { exhaustive, greedy })
}

/// Weighted coverage function: element `i` covers a random subset of
/// `items` weighted items; `v(A)` is the weight of the union. Submodular
/// and monotone by construction.
pub fn random_coverage<T: Scalar, R: Rng>(rng: &mut R, n: usize, items: usize) -> Result<MonotoneSetFunction<T>> {
    let item_w: Vec<T> = (0..items).map(|_| T::from_ratio(rng.gen_range(1..=6), rng.gen_range(1..=4))).collect();
    let covers: Vec<u64> = (0..n).map(|_| rng.gen::<u64>() & ((1u64 << items) - 1)).collect();
    MonotoneSetFunction::from_fn(n, |m| {
        let union = (0..n).filter(|i| m >> i & 1 == 1).fold(0u64, |u, i| u | covers[i]);
        (0..items).filter(|k| union >> k & 1 == 1).fold(T::zero(), |a, k| a + item_w[k].clone())
    })
}

/// `v(A) = sum_k c_k min(|A cap S_k|, b_k)`: a mixture of concave functions
/// of restricted cardinality.
pub fn random_concave_mixture<T: Scalar, R: Rng>(
    rng: &mut R,
    n: usize,
    terms: usize,
) -> Result<MonotoneSetFunction<T>> {
    let parts: Vec<(usize, usize, T)> = (0..terms)
        .map(|_| {
            let s = rng.gen_range(1..1usize << n);
            let b = rng.gen_range(1..=n);
            (s, b, T::from_ratio(rng.gen_range(1..=5), rng.gen_range(1..=3)))
        })
        .collect();
    MonotoneSetFunction::from_fn(n, |m| {
        parts.iter().fold(T::zero(), |a, (s, b, c)| {
            let k = (m & s).count_ones() as usize;
            a + c.clone() * T::from_usize(k.min(*b)).unwrap()
        })
    })
}

/// A random monotone submodular function from either generator.
pub fn random_submodular<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Result<MonotoneSetFunction<T>> {
    if rng.gen_bool(0.5) {
        let items = rng.gen_range(2..=8);
        random_coverage(rng, n, items)
    } else {
        let terms = rng.gen_range(1..=4);
        random_concave_mixture(rng, n, terms)
    }
}

/// A convex combination of up to four random greedy vertices.
pub fn random_bp_member<T: Scalar, R: Rng>(rng: &mut R, v: &MonotoneSetFunction<T>) -> Result<FiniteMeasureVector<T>> {
    let n = v.ground_size();
    let k = rng.gen_range(1..=4);
    let raw: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=9)).collect();
    let sum: i64 = raw.iter().sum();
    let mut mu = vec![T::zero(); n];
    for c in raw {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let vert = greedy_base_vertex(v, &perm)?;
        let lam = T::from_ratio(c, sum);
        for (m, x) in mu.iter_mut().zip(vert.as_slice()) {
            *m = m.clone() + lam.clone() * x.clone();
        }
    }
    FiniteMeasureVector::new(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> MonotoneSetFunction<f64> {
        MonotoneSetFunction::new(2, vec![0.0, 1.0, 1.0, 1.5]).unwrap()
    }

    #[test]
    fn integral_examples() {
        let v = example();
        assert_eq!(choquet_integral(&v, &[2.0, 1.0]).unwrap(), 2.5);
        assert_eq!(choquet_integral(&v, &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(choquet_integral(&v, &[3.0, 3.0]).unwrap(), 4.5);
        assert!(choquet_integral(&v, &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn submodularity_examples() {
        let sq = MonotoneSetFunction::from_fn(4, |m| (m.count_ones() as f64).sqrt() * 3.0).unwrap();
        assert!(sq.is_submodular());
        let add = MonotoneSetFunction::additive(&[1.0, 2.0, 0.5]).unwrap();
        assert!(add.is_submodular());
        let conv = MonotoneSetFunction::from_fn(3, |m| (m.count_ones() as f64).powi(2)).unwrap();
        assert!(!conv.is_submodular());
    }

    #[test]
    fn dual_examples() {
        let add = MonotoneSetFunction::additive(&[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(add.dual().table(), add.table());
        let v = example();
        assert_eq!(*v.dual().value(0b01), 0.5);
        assert_eq!(v.dual().dual().table(), v.table());
    }

    #[test]
    fn greedy_examples() {
        let v = example();
        assert_eq!(greedy_base_vertex(&v, &[0, 1]).unwrap().as_slice(), &[1.0, 0.5]);
        assert_eq!(greedy_base_vertex(&v, &[1, 0]).unwrap().as_slice(), &[0.5, 1.0]);
        let add = MonotoneSetFunction::additive(&[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(greedy_base_vertex(&add, &[2, 0, 1]).unwrap().as_slice(), &[1.0, 2.0, 0.5]);
        let conv = MonotoneSetFunction::from_fn(2, |m| (m.count_ones() as f64).powi(2)).unwrap();
        assert!(matches!(greedy_base_vertex(&conv, &[0, 1]), Err(Error::Precondition(_))));
        assert!(greedy_base_vertex(&v, &[0, 0]).is_err());
    }

    #[test]
    fn membership_examples() {
        let v = example();
        let a = greedy_base_vertex(&v, &[0, 1]).unwrap();
        let b = greedy_base_vertex(&v, &[1, 0]).unwrap();
        assert!(in_base_polyhedron(&a, &v) && in_base_polyhedron(&b, &v));
        assert!(!in_base_polyhedron(&FiniteMeasureVector::new(vec![0.0, 0.0]).unwrap(), &v));
        let mid = FiniteMeasureVector::new(vec![0.75, 0.75]).unwrap();
        assert!(in_base_polyhedron(&mid, &v) && in_core_star(&mid, &v));
    }

    #[test]
    fn bp_max_examples() {
        let v = example();
        let m = base_polyhedron_max(&v, &[2.0, 1.0]).unwrap();
        let (val, order) = m.exhaustive.unwrap();
        assert_eq!((val, order, m.greedy), (2.5, vec![0, 1], 2.5));
        let m = base_polyhedron_max(&v, &[2.0, 2.0]).unwrap();
        assert_eq!((m.exhaustive.unwrap().0, m.greedy), (3.0, 3.0));
    }

    #[test]
    fn csv_roundtrip() {
        let v = example();
        let mut buf = Vec::new();
        v.write_csv(&mut buf, |x| x.to_string()).unwrap();
        let back = MonotoneSetFunction::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.table(), v.table());
        assert!(MonotoneSetFunction::<f64>::read_csv("bitmask,value\n0,0\n1,1\n1,2\n".as_bytes()).is_err());
    }
}
