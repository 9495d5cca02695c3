//! m-adic cubes, Cantor interval systems, product dense systems and a
//! sampled verifier for the `(log_m, theta)`-density property.
//!
//! Sampled test cubes `Q_r(z) = z + [-r, r]^d` use a half-side `r`. The
//! m-adic cubes tiling the ambient cube `l + [0, 1]^d` are
//! `Q(xi, n) = xi + [0, m^{-n}]^d`, anchored at their lowest corner.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::scalar::parse_rational;

pub type Interval = (BigRational, BigRational);

/// An axis-aligned box, one closed interval per axis.
pub type Parallelepiped = Vec<Interval>;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn pow_rat(base: u32, exp: u32) -> BigRational {
    BigRational::from_integer(BigInt::from(base).pow(exp))
}

/// Closed gap intervals of level `n` of the middle-third construction, left to right.
pub fn cantor_level(n: u32) -> Result<Vec<Interval>> {
    if n == 0 {
        return invalid("Cantor levels start at 1");
    }
    // left ends of the level-n construction nodes, each of length 3^{-(n-1)}
    let mut starts = vec![BigRational::zero()];
    for k in 1..n {
        let step = pow_rat(3, k).recip() * BigRational::from_integer(2.into());
        starts = starts.into_iter().flat_map(|s| [s.clone(), s + step.clone()]).collect();
    }
    let third = pow_rat(3, n).recip();
    Ok(starts
        .into_iter()
        .map(|s| {
            let a = s + third.clone();
            let b = a.clone() + third.clone();
            (a, b)
        })
        .collect())
}

/// A sequence of parallelepiped unions `D_1, D_2, ...` inside `l + [0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub ell: Vec<i64>,
    /// `levels[j - 1]` holds `D_j`.
    pub levels: Vec<Vec<Parallelepiped>>,
    pub m: u32,
    pub theta: BigRational,
}

impl DenseSystem {
    pub fn new(ell: Vec<i64>, levels: Vec<Vec<Parallelepiped>>, m: u32, theta: BigRational) -> Result<Self> {
        if ell.is_empty() {
            return invalid("dimension must be at least 1");
        }
        if m < 2 {
            return invalid("m must exceed 1");
        }
        if !(theta > BigRational::zero() && theta < BigRational::one()) {
            return invalid("theta must lie in (0, 1)");
        }
        let d = ell.len();
        for (j, level) in levels.iter().enumerate() {
            for p in level {
                if p.len() != d {
                    return invalid(format!("level {}: box of dimension {} in d = {d}", j + 1, p.len()));
                }
                for ((a, b), l) in p.iter().zip(&ell) {
                    let lo = BigRational::from_integer((*l).into());
                    let hi = lo.clone() + BigRational::one();
                    if a > b || *a < lo || *b > hi {
                        return invalid(format!("level {}: box leaves the ambient cube", j + 1));
                    }
                }
            }
        }
        Ok(DenseSystem { ell, levels, m, theta })
    }

    pub fn dim(&self) -> usize {
        self.ell.len()
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `D_j`, empty beyond the stored depth.
    pub fn level(&self, j: usize) -> &[Parallelepiped] {
        if j == 0 || j > self.levels.len() {
            &[]
        } else {
            &self.levels[j - 1]
        }
    }

    /// Shifts every box and the ambient cube by the lattice vector `shift`.
    pub fn translated(&self, shift: &[i64]) -> Result<Self> {
        if shift.len() != self.dim() {
            return invalid("translation dimension mismatch");
        }
        let delta: Vec<BigRational> = shift.iter().map(|s| BigRational::from_integer((*s).into())).collect();
        let levels = self
            .levels
            .iter()
            .map(|lv| lv.iter().map(|p| p.iter().zip(&delta).map(|((a, b), s)| (a + s, b + s)).collect()).collect())
            .collect();
        let ell = self.ell.iter().zip(shift).map(|(a, b)| a + b).collect();
        DenseSystem::new(ell, levels, self.m, self.theta.clone())
    }

    /// CSV `level,a1,b1,...,ad,bd` with exact rational strings.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["level".to_string()];
        for i in 1..=self.dim() {
            header.push(format!("a{i}"));
            header.push(format!("b{i}"));
        }
        w.write_record(&header)?;
        for (j, lv) in self.levels.iter().enumerate() {
            for p in lv {
                let mut rec = vec![(j + 1).to_string()];
                for (a, b) in p {
                    rec.push(a.to_string());
                    rec.push(b.to_string());
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, ell: Vec<i64>, m: u32, theta: BigRational) -> Result<Self> {
        let d = ell.len();
        let mut rdr = csv::Reader::from_reader(input);
        let mut levels: Vec<Vec<Parallelepiped>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let at = line + 2;
            if rec.len() != 1 + 2 * d {
                return Err(Error::Parse(format!("line {at}: expected {} fields", 1 + 2 * d)));
            }
            let j: usize = rec[0]
                .trim()
                .parse()
                .ok()
                .filter(|j| *j >= 1)
                .ok_or_else(|| Error::Parse(format!("line {at}: bad level")))?;
            let mut p = Vec::with_capacity(d);
            for i in 0..d {
                let a = parse_rational(rec[1 + 2 * i].trim()).map_err(|e| Error::Parse(format!("line {at}: {e}")))?;
                let b = parse_rational(rec[2 + 2 * i].trim()).map_err(|e| Error::Parse(format!("line {at}: {e}")))?;
                p.push((a, b));
            }
            if levels.len() < j {
                levels.resize(j, Vec::new());
            }
            levels[j - 1].push(p);
        }
        DenseSystem::new(ell, levels, m, theta)
    }
}

/// Cantor gaps of levels `1..=depth` in `[0, 1]`, `(m, theta) = (3, 1/9)`.
pub fn cantor_system(depth: u32) -> Result<DenseSystem> {
    let levels = (1..=depth)
        .map(|n| cantor_level(n).map(|iv| iv.into_iter().map(|i| vec![i]).collect()))
        .collect::<Result<_>>()?;
    DenseSystem::new(vec![0], levels, 3, rat(1, 9))
}

/// `D_j = l + [0, 1]^d` at every level.
pub fn full_cube_system(ell: Vec<i64>, depth: usize, m: u32, theta: BigRational) -> Result<DenseSystem> {
    let full: Parallelepiped = ell
        .iter()
        .map(|l| {
            let lo = BigRational::from_integer((*l).into());
            (lo.clone(), lo + BigRational::one())
        })
        .collect();
    DenseSystem::new(ell, vec![vec![full]; depth], m, theta)
}

/// A system with `depth` empty levels.
pub fn empty_system(d: usize, depth: usize, m: u32, theta: BigRational) -> Result<DenseSystem> {
    DenseSystem::new(vec![0; d], vec![Vec::new(); depth], m, theta)
}

/// `D_j × [0, 1]^{d-1}` for a one-dimensional base over `[0, 1]`.
pub fn product_system(base: &DenseSystem, d: usize) -> Result<DenseSystem> {
    if base.dim() != 1 || base.ell[0] != 0 {
        return invalid("product base must be one-dimensional over [0, 1]");
    }
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    let unit = (BigRational::zero(), BigRational::one());
    let levels = base
        .levels
        .iter()
        .map(|lv| {
            lv.iter()
                .map(|p| {
                    let mut q = p.clone();
                    q.extend(std::iter::repeat(unit.clone()).take(d - 1));
                    q
                })
                .collect()
        })
        .collect();
    DenseSystem::new(vec![0; d], levels, base.m, base.theta.clone())
}

/// Per-box, per-axis admissible corners `xi_i` with `[xi_i, xi_i + m^{-n}] ⊆ [a_i, b_i]`
/// on the lattice `l_i + m^{-n} Z` inside the ambient cube. The admissible set
/// of a box is the product of its axis lists.
pub fn xi_axes(system: &DenseSystem, n: u32, j: usize) -> Vec<Vec<Vec<BigRational>>> {
    let side = pow_rat(system.m, n).recip();
    let cells = BigInt::from(system.m).pow(n);
    system
        .level(j)
        .iter()
        .map(|p| {
            p.iter()
                .zip(&system.ell)
                .map(|((a, b), l)| {
                    let lo = BigRational::from_integer((*l).into());
                    // smallest k with lo + k side >= a, largest with lo + (k + 1) side <= b
                    let k_min = ((a - &lo) / &side).ceil().to_integer().max(BigInt::zero());
                    let k_max = ((b - &lo) / &side).floor().to_integer() - BigInt::one();
                    let k_max = k_max.min(&cells - BigInt::one());
                    let mut out = Vec::new();
                    let mut k = k_min;
                    while k <= k_max {
                        out.push(lo.clone() + BigRational::from_integer(k.clone()) * &side);
                        k += 1;
                    }
                    out
                })
                .collect()
        })
        .collect()
}

/// `Xi_n(l, j)`: all corners `xi` with `Q(xi, n) ⊆ D_j`, sorted and deduplicated.
pub fn xi_admissible(system: &DenseSystem, n: u32, j: usize) -> Vec<Vec<BigRational>> {
    let mut out = BTreeSet::new();
    for axes in xi_axes(system, n, j) {
        if axes.iter().any(|a| a.is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; axes.len()];
        loop {
            out.insert(idx.iter().zip(&axes).map(|(&k, a)| a[k].clone()).collect::<Vec<_>>());
            let mut i = 0;
            while i < idx.len() {
                idx[i] += 1;
                if idx[i] < axes[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == idx.len() {
                break;
            }
        }
    }
    out.into_iter().collect()
}

/// Outcome of one sampled cube.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub r: BigRational,
    pub z: Vec<BigRational>,
    /// Number of levels `[log_m(1/(theta r))]` the definition allows.
    pub j_max: usize,
    /// `(j, box index in D_j, center s of Q_{theta r}(s))`.
    pub witness: Option<(usize, usize, Vec<BigRational>)>,
}

impl TrialResult {
    pub fn passed(&self) -> bool {
        self.witness.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierReport {
    pub trials: Vec<TrialResult>,
    /// Trials whose allowed level range was empty.
    pub empty_ranges: usize,
}

impl VerifierReport {
    pub fn passes(&self) -> usize {
        self.trials.iter().filter(|t| t.passed()).count()
    }

    pub fn all_pass(&self) -> bool {
        self.passes() == self.trials.len()
    }

    /// CSV `trial,r,z1..zd,pass,j,box,s1..sd`, rationals as `p/q`.
    pub fn write_csv<W: Write>(&self, out: W, d: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trial".to_string(), "r".into()];
        header.extend((1..=d).map(|i| format!("z{i}")));
        header.extend(["pass".into(), "j".into(), "box".into()]);
        header.extend((1..=d).map(|i| format!("s{i}")));
        w.write_record(&header)?;
        for t in &self.trials {
            let mut rec = vec![t.trial.to_string(), t.r.to_string()];
            rec.extend(t.z.iter().map(|v| v.to_string()));
            match &t.witness {
                Some((j, b, s)) => {
                    rec.extend(["true".into(), j.to_string(), b.to_string()]);
                    rec.extend(s.iter().map(|v| v.to_string()));
                }
                None => {
                    rec.extend(["false".into(), String::new(), String::new()]);
                    rec.extend(std::iter::repeat(String::new()).take(d));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Radii below `r_max * R_FLOOR` are redrawn so the level range stays within reach.
pub const R_FLOOR: f64 = 1e-5;

/// Largest `j` with `m^j <= 1 / (theta r)`, computed exactly.
fn level_bound(m: u32, theta: &BigRational, r: &BigRational) -> usize {
    let target = (theta * r).recip();
    let mut j = 0usize;
    let mut power = BigRational::from_integer(BigInt::from(m));
    while power <= target {
        j += 1;
        power *= BigRational::from_integer(BigInt::from(m));
    }
    j
}

/// Exact witness: a box `Pi` of some allowed level and a cube
/// `Q_{theta r}(s) ⊆ Pi ∩ Q_r(z)`.
pub fn find_witness(
    system: &DenseSystem,
    r: &BigRational,
    z: &[BigRational],
    j_max: usize,
) -> Option<(usize, usize, Vec<BigRational>)> {
    let tr = &system.theta * r;
    let two_tr = &tr + &tr;
    let zf: Vec<f64> = z.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let rf = r.to_f64().unwrap_or(0.0);
    for j in 1..=j_max.min(system.depth()) {
        for (bi, p) in system.level(j).iter().enumerate() {
            // cheap float rejection before the exact test
            let far = p.iter().zip(&zf).any(|((a, b), zc)| {
                let (af, bf) = (a.to_f64().unwrap_or(0.0), b.to_f64().unwrap_or(0.0));
                af > zc + rf * (1.0 + 1e-9) + 1e-12 || bf < zc - rf * (1.0 + 1e-9) - 1e-12
            });
            if far {
                continue;
            }
            let mut s = Vec::with_capacity(z.len());
            let mut ok = true;
            for ((a, b), zc) in p.iter().zip(z) {
                let lo = std::cmp::max(a.clone(), zc - r);
                let hi = std::cmp::min(b.clone(), zc + r);
                if &hi - &lo < two_tr {
                    ok = false;
                    break;
                }
                s.push(lo + &tr);
            }
            if ok {
                return Some((j, bi, s));
            }
        }
    }
    None
}

/// Checks `Q_{theta r}(s) ⊆ Pi ∩ Q_r(z)` exactly.
pub fn witness_is_sound(system: &DenseSystem, t: &TrialResult) -> bool {
    let Some((j, bi, s)) = &t.witness else { return true };
    let Some(p) = system.level(*j).get(*bi) else { return false };
    let tr = &system.theta * &t.r;
    *j >= 1
        && *j <= t.j_max
        && p.iter().zip(&t.z).zip(s).all(|(((a, b), zc), sc)| {
            let (lo, hi) = (sc - &tr, sc + &tr);
            lo >= *a && hi <= *b && lo >= zc - &t.r && hi <= zc + &t.r
        })
}

fn draw_unit<R: Rng>(rng: &mut R) -> BigRational {
    // uniform on (0, 1] with 32 bits
    let k: u64 = rng.gen_range(1..=(1u64 << 32));
    BigRational::new(BigInt::from(k), BigInt::from(1u64 << 32))
}

/// Samples `n_trials` cubes `Q_r(z) ⊆ l + [0, 1]^d` with
/// `r ∈ (0, min(1/2, 1/(theta m^2))]` and searches exact witnesses. Trial `k`
/// draws from stream `k` of a ChaCha generator keyed by `seed`.
pub fn verify_dense_system(system: &DenseSystem, n_trials: usize, seed: u64) -> VerifierReport {
    let d = system.dim();
    let m2 = BigRational::from_integer(BigInt::from(system.m).pow(2));
    let r_max = std::cmp::min(rat(1, 2), (&system.theta * m2).recip());
    let floor = BigRational::new(BigInt::from(1), BigInt::from((1.0 / R_FLOOR).round() as i64));
    let ell: Vec<BigRational> = system.ell.iter().map(|l| BigRational::from_integer((*l).into())).collect();
    let trials: Vec<TrialResult> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let u = loop {
                let u = draw_unit(&mut rng);
                if u >= floor {
                    break u;
                }
            };
            let r = &r_max * u;
            let span = BigRational::one() - &r - &r;
            let z: Vec<BigRational> = ell.iter().map(|l| l + &r + &span * draw_unit(&mut rng)).collect();
            let j_max = level_bound(system.m, &system.theta, &r);
            let witness = find_witness(system, &r, &z, j_max);
            TrialResult { trial, r, z, j_max, witness }
        })
        .collect();
    let empty_ranges = trials.iter().filter(|t| t.j_max == 0).count();
    debug_assert!(d == system.dim());
    VerifierReport { trials, empty_ranges }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_levels_small() {
        assert_eq!(cantor_level(1).unwrap(), vec![(rat(1, 3), rat(2, 3))]);
        assert_eq!(cantor_level(2).unwrap(), vec![(rat(1, 9), rat(2, 9)), (rat(7, 9), rat(8, 9))]);
        for n in 1..8 {
            let lv = cantor_level(n).unwrap();
            assert_eq!(lv.len(), 1 << (n - 1));
            assert!(lv.iter().all(|(a, b)| b - a == pow_rat(3, n).recip()));
            assert!(lv.windows(2).all(|w| w[0].1 < w[1].0));
        }
    }

    #[test]
    fn cantor_levels_disjoint_across_levels() {
        let all: Vec<Interval> = (1..7).flat_map(|n| cantor_level(n).unwrap()).collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!(a.1 < b.0 || b.1 < a.0);
            }
        }
    }

    #[test]
    fn xi_for_cantor_level_one() {
        let sys = cantor_system(3).unwrap();
        let xi = xi_admissible(&sys, 2, 1);
        assert_eq!(xi, vec![vec![rat(3, 9)], vec![rat(4, 9)], vec![rat(5, 9)]]);
        assert_eq!(xi_admissible(&sys, 2, 2).len(), 2);
        assert!(xi_admissible(&sys, 1, 2).is_empty());
    }

    #[test]
    fn xi_full_cube_counts() {
        let sys = full_cube_system(vec![2, -1], 2, 3, rat(1, 9)).unwrap();
        let xi = xi_admissible(&sys, 2, 1);
        assert_eq!(xi.len(), 81);
        assert_eq!(xi[0], vec![rat(2, 1), rat(-1, 1)]);
        assert!(xi_admissible(&sys, 2, 5).is_empty());
    }

    #[test]
    fn product_and_translation() {
        let base = cantor_system(2).unwrap();
        let prod = product_system(&base, 3).unwrap();
        assert_eq!(prod.level(1)[0], vec![(rat(1, 3), rat(2, 3)), (rat(0, 1), rat(1, 1)), (rat(0, 1), rat(1, 1))]);
        let moved = prod.translated(&[1, 0, -2]).unwrap();
        assert_eq!(moved.level(1)[0][0], (rat(4, 3), rat(5, 3)));
        assert_eq!(moved.level(1)[0][2], (rat(-2, 1), rat(-1, 1)));
    }

    #[test]
    fn csv_roundtrip() {
        let sys = product_system(&cantor_system(3).unwrap(), 2).unwrap();
        let mut buf = Vec::new();
        sys.write_csv(&mut buf).unwrap();
        let back = DenseSystem::read_csv(buf.as_slice(), vec![0, 0], 3, rat(1, 9)).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn verifier_trivial_systems() {
        let full = full_cube_system(vec![0, 0], 3, 3, rat(1, 9)).unwrap();
        let rep = verify_dense_system(&full, 200, 7);
        assert!(rep.all_pass());
        assert!(rep.trials.iter().all(|t| t.witness.as_ref().unwrap().0 == 1));
        let empty = empty_system(2, 3, 3, rat(1, 9)).unwrap();
        assert_eq!(verify_dense_system(&empty, 50, 7).passes(), 0);
    }

    #[test]
    fn verifier_cantor_small_run() {
        let sys = cantor_system(14).unwrap();
        let rep = verify_dense_system(&sys, 500, 11);
        assert!(rep.trials.iter().all(|t| witness_is_sound(&sys, t)));
        assert!(rep.all_pass(), "{} of {} passed", rep.passes(), rep.trials.len());
    }

    #[test]
    fn verifier_is_deterministic() {
        let sys = cantor_system(10).unwrap();
        assert_eq!(verify_dense_system(&sys, 64, 3), verify_dense_system(&sys, 64, 3));
    }
}
