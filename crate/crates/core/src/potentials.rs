//! Potentials: the periodic window `theta_beta`, the Cantor profile, the
//! counterexample family `V_alpha`, grid-sampled potentials and the
//! `Y(x, t) = sqrt V(x) |x - t|^{2-d} sqrt V(t)` matrix.
//!
//! Criteria never sample a potential at a single point per cell. Each cell
//! is split into atoms `(value, volume fraction)`, which for `V_alpha` are
//! computed from the exact Cantor geometry down to a depth cap.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{domain, invalid, Error, Result};
use crate::measure_space::{Cell, DiscreteMeasureSpace};
use crate::rearrange::Matrix2D;

/// Deepest Cantor level resolved by [`cantor_level_of`].
pub const MAX_CANTOR_LEVEL: u32 = 40;

/// Default depth of the atom decomposition; deeper levels count as zero.
pub const DEFAULT_ATOM_DEPTH: u32 = 14;

/// `1` on `(0, beta]` modulo 1, else `0`. A zero fractional part is read as 1.
pub fn theta_beta(beta: f64, x: f64) -> u8 {
    let mut f = x - x.floor();
    if f == 0.0 {
        f = 1.0;
    }
    u8::from(f > 0.0 && f <= beta)
}

/// Splits a finite double into `(mantissa, exponent)` with `x = m / 2^e`, `e >= 0`.
fn dyadic_parts(x: f64) -> (BigUint, u32) {
    debug_assert!(x.is_finite() && x >= 0.0);
    if x == 0.0 {
        return (BigUint::zero(), 0);
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e2) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    let tz = mant.trailing_zeros() as i64;
    let (mant, e2) = (mant >> tz, e2 + tz);
    if e2 >= 0 {
        (BigUint::from(mant) << (e2 as usize), 0)
    } else {
        (BigUint::from(mant), (-e2) as u32)
    }
}

/// Level `n` with `u` in a level-`n` gap interval of the middle-third Cantor
/// construction, computed exactly from the binary expansion of `u`. `None`
/// when `u` lies outside `[0, 1]` or in no gap up to [`MAX_CANTOR_LEVEL`].
pub fn cantor_level_of(u: f64) -> Option<u32> {
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let (mut num, e) = dyadic_parts(u);
    let den = BigUint::one() << (e as usize);
    let two_den = &den << 1usize;
    for level in 1..=MAX_CANTOR_LEVEL {
        let three = &num * 3u32;
        if three >= den && three <= two_den {
            return Some(level);
        }
        num = if three < den { three } else { three - &two_den };
    }
    None
}

/// Exact fractional part of `3^p u`, returned as a double.
fn frac_times_pow3(u: f64, p: u32) -> f64 {
    let (num, e) = dyadic_parts(u.abs());
    let den = BigUint::one() << (e as usize);
    let scaled = num * BigUint::from(3u32).pow(p);
    let rem = &scaled % &den;
    let frac = if rem.is_zero() {
        0.0
    } else {
        // shift both down so the ratio fits a double
        let shift = den.bits().saturating_sub(60) as usize;
        (&rem >> shift).to_f64().unwrap_or(0.0) / (&den >> shift).to_f64().unwrap_or(1.0)
    };
    if u < 0.0 && frac > 0.0 {
        1.0 - frac
    } else {
        frac
    }
}

/// `C(theta) = (2 sqrt(d) (1 + 1/(theta d)))^{d-2}`.
pub fn c_theta(d: usize, theta: f64) -> f64 {
    let d_f = d as f64;
    (2.0 * d_f.sqrt() * (1.0 + 1.0 / (theta * d_f))).powi(d as i32 - 2)
}

/// The growth profile `N(l)` of `V_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthProfile {
    /// `min(|l|_inf + 1, 3^{|l|_inf (d-2)})`.
    Default,
    /// Explicit values, `fallback` elsewhere.
    Table { values: BTreeMap<Vec<i64>, f64>, fallback: f64 },
}

impl GrowthProfile {
    pub fn eval(&self, l: &[i64], d: usize) -> f64 {
        match self {
            GrowthProfile::Default => {
                let n = l.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
                let lin = (n + 1) as f64;
                let exp = 3f64.powf((n as f64) * (d as f64 - 2.0));
                lin.min(exp).max(1.0)
            }
            GrowthProfile::Table { values, fallback } => *values.get(l).unwrap_or(fallback),
        }
    }
}

/// Parameters of `V_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValphaParams {
    pub alpha: f64,
    pub theta: f64,
    pub d: usize,
    pub growth: GrowthProfile,
    /// Cantor levels deeper than this contribute zero to cell atoms.
    pub atom_depth: u32,
}

impl ValphaParams {
    pub fn new(d: usize, alpha: f64) -> Self {
        ValphaParams { alpha, theta: 1.0 / 9.0, d, growth: GrowthProfile::Default, atom_depth: DEFAULT_ATOM_DEPTH }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 {
            return invalid("V_alpha needs d >= 3");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return invalid(format!("alpha = {} outside (0, 2)", self.alpha));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid(format!("theta = {} outside (0, 1)", self.theta));
        }
        if self.atom_depth == 0 || self.atom_depth > MAX_CANTOR_LEVEL {
            return invalid("atom depth must be in 1..=40");
        }
        if let GrowthProfile::Table { values, fallback } = &self.growth {
            if values.values().chain([fallback]).any(|v| !(*v >= 1.0) || !v.is_finite()) {
                return invalid("growth profile values must be finite and >= 1");
            }
        }
        Ok(())
    }

    /// Value taken on the level-`n` part of the window: `N C(theta) 3^{-n(d-2)}`.
    pub fn level_value(&self, n_growth: f64, level: u32) -> f64 {
        n_growth * c_theta(self.d, self.theta) * 3f64.powf(-(level as f64) * (self.d as f64 - 2.0))
    }

    /// Window width `beta = 3^{-alpha n}` on level `n`.
    pub fn beta(&self, level: u32) -> f64 {
        3f64.powf(-self.alpha * level as f64)
    }
}

/// `Sigma_{N,p,alpha}(x)` on `(0, 1]`.
pub fn sigma_profile(params: &ValphaParams, n_growth: f64, p: u32, x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return domain(format!("profile argument {x} outside (0, 1]"));
    }
    Ok(match cantor_level_of(x) {
        None => 0.0,
        Some(n) => {
            let mut f = frac_times_pow3(x, p);
            if f == 0.0 {
                f = 1.0;
            }
            if f <= params.beta(n) {
                params.level_value(n_growth, n)
            } else {
                0.0
            }
        }
    })
}

/// Lattice index `l` with `x` in `l + (0, 1]^d`, so shared faces go to the
/// lexicographically smallest cube.
pub fn unit_cube_index(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| v.ceil() as i64 - 1).collect()
}

/// `V_alpha(x)`.
pub fn v_alpha(params: &ValphaParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.d {
        return invalid(format!("point of dimension {} for d = {}", x.len(), params.d));
    }
    let l = unit_cube_index(x);
    let n_growth = params.growth.eval(&l, params.d);
    let p = l.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as u32 + 1;
    sigma_profile(params, n_growth, p, x[0] - l[0] as f64)
}

/// A cell's potential as a finite distribution of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    /// `(value, volume fraction)`, fractions summing to 1.
    pub parts: Vec<(f64, f64)>,
}

impl Atoms {
    pub fn single(v: f64) -> Self {
        Atoms { parts: vec![(v, 1.0)] }
    }

    pub fn max_value(&self) -> f64 {
        self.parts.iter().map(|p| p.0).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.parts.iter().map(|(v, w)| v * w).sum()
    }
}

pub type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A non-negative potential on `R^d`.
#[derive(Clone)]
pub enum PotentialSpec {
    Valpha(ValphaParams),
    /// Piecewise constant on the cells of a grid, zero off the grid.
    Grid {
        space: DiscreteMeasureSpace,
        values: Vec<f64>,
    },
    Constant {
        d: usize,
        c: f64,
    },
    /// Arbitrary pointwise potential, one sample at each cell center.
    Custom {
        d: usize,
        f: PotentialFn,
    },
}

impl std::fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PotentialSpec::Valpha(p) => f.debug_tuple("Valpha").field(p).finish(),
            PotentialSpec::Grid { values, .. } => write!(f, "Grid({} cells)", values.len()),
            PotentialSpec::Constant { d, c } => write!(f, "Constant(d={d}, c={c})"),
            PotentialSpec::Custom { d, .. } => write!(f, "Custom(d={d})"),
        }
    }
}

impl PotentialSpec {
    pub fn valpha(params: ValphaParams) -> Result<Self> {
        params.validate()?;
        Ok(PotentialSpec::Valpha(params))
    }

    pub fn grid(space: DiscreteMeasureSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return invalid(format!("{} values for {} cells", values.len(), space.len()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("grid potential values must be finite and non-negative");
        }
        Ok(PotentialSpec::Grid { space, values })
    }

    pub fn constant(d: usize, c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return invalid("constant potential must be finite and non-negative");
        }
        Ok(PotentialSpec::Constant { d, c })
    }

    pub fn custom(d: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PotentialSpec::Custom { d, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            PotentialSpec::Valpha(p) => p.d,
            PotentialSpec::Grid { space, .. } => space.dim(),
            PotentialSpec::Constant { d, .. } | PotentialSpec::Custom { d, .. } => *d,
        }
    }

    /// Scales the potential by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return invalid("scale must be finite and non-negative");
        }
        Ok(match self {
            PotentialSpec::Grid { space, values } => {
                PotentialSpec::Grid { space: space.clone(), values: values.iter().map(|v| v * c).collect() }
            }
            PotentialSpec::Constant { d, c: c0 } => PotentialSpec::Constant { d: *d, c: c0 * c },
            other => {
                let inner = other.clone();
                PotentialSpec::custom(other.dim(), move |x| c * inner.value(x).unwrap_or(0.0))
            }
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return invalid(format!("point of dimension {} for d = {}", x.len(), self.dim()));
        }
        match self {
            PotentialSpec::Valpha(p) => v_alpha(p, x),
            PotentialSpec::Grid { space, values } => {
                Ok(space.cells().iter().position(|c| c.contains(x)).map(|i| values[i]).unwrap_or(0.0))
            }
            PotentialSpec::Constant { c, .. } => Ok(*c),
            PotentialSpec::Custom { f, .. } => {
                let v = f(x);
                if !v.is_finite() || v < 0.0 {
                    return domain(format!("custom potential returned {v}"));
                }
                Ok(v)
            }
        }
    }

    /// Value distribution of the potential over the box of `cell`.
    pub fn cell_atoms(&self, cell: &Cell) -> Result<Atoms> {
        match self {
            PotentialSpec::Valpha(p) => Ok(valpha_box_atoms(p, &cell.box_center, cell.half_side)),
            PotentialSpec::Grid { space, values } => {
                // exact cell match first, otherwise sample the center
                let hit =
                    space.cells().iter().position(|c| c.half_side == cell.half_side && c.box_center == cell.box_center);
                match hit {
                    Some(i) => Ok(Atoms::single(values[i])),
                    None => self.value(&cell.center).map(Atoms::single),
                }
            }
            PotentialSpec::Constant { c, .. } => Ok(Atoms::single(*c)),
            PotentialSpec::Custom { .. } => self.value(&cell.center).map(Atoms::single),
        }
    }

    /// Atoms of every cell of `space`, computed in parallel.
    pub fn space_atoms(&self, space: &DiscreteMeasureSpace) -> Result<Vec<Atoms>> {
        if space.dim() != self.dim() {
            return invalid("dimension mismatch between potential and space");
        }
        space.cells().par_iter().map(|c| self.cell_atoms(c)).collect()
    }

    /// Grid potential from CSV `cell_index,value` over the cells of `space`.
    pub fn read_grid_csv<R: Read>(space: DiscreteMeasureSpace, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut values = vec![None; space.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Parse(format!("line {}: bad {what}", line + 2));
            let idx: usize = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("cell_index"))?;
            let v: f64 = rec.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("value"))?;
            if idx >= values.len() {
                return Err(Error::Parse(format!("line {}: cell index {idx} out of range", line + 2)));
            }
            values[idx] = Some(v);
        }
        let values: Option<Vec<f64>> = values.into_iter().collect();
        match values {
            Some(v) => PotentialSpec::grid(space, v),
            None => Err(Error::Parse("grid CSV does not cover every cell".into())),
        }
    }

    pub fn write_grid_csv<W: Write>(&self, out: W) -> Result<()> {
        let PotentialSpec::Grid { values, .. } = self else {
            return invalid("only grid potentials can be written as CSV");
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_index", "value"])?;
        for (i, v) in values.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Measure of `{x in [s, t] : frac(3^p x) in (0, beta]}`.
fn window_measure(s: f64, t: f64, p: u32, beta: f64) -> f64 {
    if t <= s || beta <= 0.0 {
        return 0.0;
    }
    let scale = 3f64.powi(p as i32);
    let count = |y: f64| {
        let f = y.floor();
        f * beta + (y - f).min(beta)
    };
    ((count(t * scale) - count(s * scale)) / scale).max(0.0)
}

/// `mes(D_k ∩ [0, w])` for the standard construction on `[0, 1]`, `D_k`
/// the union of the level-`k` gaps.
fn cantor_prefix(k: u32, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if w >= 1.0 {
        return 2f64.powi(k as i32 - 1) / 3f64.powi(k as i32);
    }
    if k == 1 {
        return (w.min(2.0 / 3.0) - 1.0 / 3.0).max(0.0);
    }
    let left = cantor_prefix(k - 1, 3.0 * w) / 3.0;
    if w <= 2.0 / 3.0 {
        left
    } else {
        left + cantor_prefix(k - 1, 3.0 * w - 2.0) / 3.0
    }
}

/// Per-level window measure of `V_alpha` on `[a, b] ⊆ [0, 1]` (cube offset
/// coordinates), index `j - 1` for level `j <= depth`.
fn level_window_measures(params: &ValphaParams, p: u32, a: f64, b: f64) -> Vec<f64> {
    let depth = params.atom_depth;
    let mut acc = vec![0.0; depth as usize];
    if b > a {
        walk_node(params, p, a, b, 0.0, 1.0, 1, &mut acc);
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn walk_node(params: &ValphaParams, p: u32, a: f64, b: f64, lo: f64, len: f64, level: u32, acc: &mut [f64]) {
    let depth = params.atom_depth;
    if level > depth || b <= lo || a >= lo + len {
        return;
    }
    let third = len / 3.0;
    let inside = a <= lo && lo + len <= b;
    if inside && level - 1 <= p {
        // node aligned with the period lattice: closed form for every level
        let nodes_above_p = 2f64.powi(p as i32 + 1 - level as i32);
        for j in level..=depth {
            let count = 2f64.powi((j - level) as i32);
            let beta = params.beta(j);
            acc[j as usize - 1] += if j <= p {
                count * 3f64.powi(-(j as i32)) * beta
            } else {
                nodes_above_p * 3f64.powi(-(p as i32)) * cantor_prefix(j - p, beta)
            };
        }
        return;
    }
    if level - 1 > p {
        // node sits inside one period cell; prune when no window can reach it
        let period = 3f64.powi(-(p as i32));
        let start = (lo / period).floor() * period;
        let reach = start + params.beta(level) * period;
        if reach <= lo.max(a) {
            return;
        }
    }
    let (ms, me) = (lo + third, lo + 2.0 * third);
    acc[level as usize - 1] += window_measure(ms.max(a), me.min(b), p, params.beta(level));
    walk_node(params, p, a, b, lo, third, level + 1, acc);
    walk_node(params, p, a, b, me, third, level + 1, acc);
}

/// Atoms of `V_alpha` over the box `center ± h`.
pub fn valpha_box_atoms(params: &ValphaParams, center: &[f64], h: f64) -> Atoms {
    let d = params.d;
    // integer-hyperplane pieces along each axis: (index, lo, hi) in absolute coordinates
    let pieces: Vec<Vec<(i64, f64, f64)>> = (0..d)
        .map(|i| {
            let (lo, hi) = (center[i] - h, center[i] + h);
            let mut out = Vec::new();
            let mut l = lo.ceil() as i64 - 1;
            loop {
                let (a, b) = ((l as f64).max(lo), ((l + 1) as f64).min(hi));
                if b > a {
                    out.push((l, a, b));
                }
                l += 1;
                if l as f64 >= hi {
                    break;
                }
            }
            out
        })
        .collect();
    let total = (2.0 * h).powi(d as i32);
    let mut levels: BTreeMap<u32, f64> = BTreeMap::new();
    let mut value_of: BTreeMap<u32, f64> = BTreeMap::new();
    let mut positive_mass = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let l: Vec<i64> = idx.iter().enumerate().map(|(i, &k)| pieces[i][k].0).collect();
        let transverse: f64 = (1..d).map(|i| pieces[i][idx[i]].2 - pieces[i][idx[i]].1).product();
        let (_, a, b) = pieces[0][idx[0]];
        let n_growth = params.growth.eval(&l, d);
        let p = l.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as u32 + 1;
        let per_level = level_window_measures(params, p, a - l[0] as f64, b - l[0] as f64);
        for (j, m) in per_level.iter().enumerate() {
            if *m > 0.0 {
                let level = j as u32 + 1;
                let frac = m * transverse / total;
                // growth can differ between pieces, so key on value as well
                let key = level * 1_000_000 + value_key(&mut value_of, params.level_value(n_growth, level));
                *levels.entry(key).or_insert(0.0) += frac;
                positive_mass += frac;
            }
        }
        // advance the mixed-radix counter
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < pieces[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let mut parts: Vec<(f64, f64)> =
        levels.into_iter().map(|(key, frac)| (value_of[&(key % 1_000_000)], frac)).collect();
    let zero = (1.0 - positive_mass).max(0.0);
    if zero > 0.0 {
        parts.push((0.0, zero));
    }
    Atoms { parts }
}

fn value_key(table: &mut BTreeMap<u32, f64>, v: f64) -> u32 {
    if let Some((k, _)) = table.iter().find(|(_, x)| **x == v) {
        return *k;
    }
    let k = table.len() as u32;
    table.insert(k, v);
    k
}

/// Flattens atoms into a weighted sample of values over `space`.
pub fn atoms_sample(space: &DiscreteMeasureSpace, atoms: &[Atoms]) -> (Vec<f64>, Vec<f64>) {
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (w, a) in space.weights().iter().zip(atoms) {
        for (v, f) in &a.parts {
            values.push(*v);
            weights.push(w * f);
        }
    }
    (values, weights)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Row and column sides of a `Y` matrix: one entry per `(cell, atom)`.
struct YSide<'a> {
    centers: Vec<&'a [f64]>,
    roots: Vec<f64>,
    weights: Vec<f64>,
}

fn y_side<'a>(space: &'a DiscreteMeasureSpace, atoms: &[Atoms]) -> YSide<'a> {
    let mut side = YSide { centers: Vec::new(), roots: Vec::new(), weights: Vec::new() };
    for ((cell, w), a) in space.cells().iter().zip(space.weights()).zip(atoms) {
        for (v, f) in &a.parts {
            side.centers.push(&cell.center);
            side.roots.push(v.sqrt());
            side.weights.push(w * f);
        }
    }
    side
}

/// `Y(x, t) = sqrt V(x) sqrt V(t) / |x - t|^{d-2}` between the atoms of
/// `rows` and `cols`, weighted by atom volume. Pairs with coincident
/// centers get ten times the largest finite entry when both roots are
/// positive, zero otherwise.
pub fn y_atom_matrix(
    rows: &DiscreteMeasureSpace,
    row_atoms: &[Atoms],
    cols: &DiscreteMeasureSpace,
    col_atoms: &[Atoms],
) -> Result<Matrix2D<f64>> {
    if rows.dim() != cols.dim() || row_atoms.len() != rows.len() || col_atoms.len() != cols.len() {
        return invalid("Y matrix: inconsistent spaces and atoms");
    }
    let d = rows.dim();
    let (r, c) = (y_side(rows, row_atoms), y_side(cols, col_atoms));
    let nc = c.roots.len();
    let mut entries: Vec<f64> = (0..r.roots.len() * nc)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / nc, k % nc);
            let s = r.roots[i] * c.roots[j];
            if s == 0.0 {
                return 0.0;
            }
            let rho = dist(r.centers[i], c.centers[j]);
            if rho == 0.0 {
                f64::INFINITY
            } else {
                s / rho.powi(d as i32 - 2)
            }
        })
        .collect();
    let max_finite = entries.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let sentinel = if max_finite > 0.0 { 10.0 * max_finite } else { 1.0 };
    for v in entries.iter_mut().filter(|v| v.is_infinite()) {
        *v = sentinel;
    }
    Matrix2D::new(r.weights, c.weights, entries)
}

/// `Y` at cell centers, one row per cell of `rows` and one column per cell of `cols`.
pub fn y_kernel_matrix(
    v: &PotentialSpec,
    rows: &DiscreteMeasureSpace,
    cols: &DiscreteMeasureSpace,
) -> Result<Matrix2D<f64>> {
    let at_centers = |s: &DiscreteMeasureSpace| -> Result<Vec<Atoms>> {
        s.cells().iter().map(|c| v.value(&c.center).map(Atoms::single)).collect()
    };
    y_atom_matrix(rows, &at_centers(rows)?, cols, &at_centers(cols)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure_space::{build_cube_grid, DomainKind};

    #[test]
    fn theta_beta_cases() {
        assert_eq!(theta_beta(1.0, 0.3), 1);
        assert_eq!(theta_beta(1.0, 2.0), 1);
        assert_eq!(theta_beta(0.0, 0.3), 0);
        assert_eq!(theta_beta(1.0 / 3.0, 2.25), 1);
        assert_eq!(theta_beta(1.0 / 3.0, 2.5), 0);
    }

    #[test]
    fn cantor_levels_exact() {
        assert_eq!(cantor_level_of(0.5), Some(1));
        assert_eq!(cantor_level_of(1.0 / 3.0 + 1e-9), Some(1));
        assert_eq!(cantor_level_of(0.15), Some(2));
        assert_eq!(cantor_level_of(0.8), Some(2));
        assert_eq!(cantor_level_of(0.0), None);
        assert_eq!(cantor_level_of(1.0), None);
        // 1/4 lies in the Cantor set
        assert_eq!(cantor_level_of(0.25), None);
    }

    #[test]
    fn c_theta_at_d3() {
        assert!((c_theta(3, 1.0 / 9.0) - 8.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sigma_profile_cases() {
        let p = ValphaParams::new(3, 1.0);
        assert_eq!(sigma_profile(&p, 1.0, 1, 0.5).unwrap(), 0.0);
        assert_eq!(sigma_profile(&p, 1.0, 1, 0.25).unwrap(), 0.0);
        // frac(3 * 0.4) = 0.2 <= 1/3
        let v = sigma_profile(&p, 1.0, 1, 0.4).unwrap();
        assert!((v - 8.0 * 3f64.sqrt() / 3.0).abs() < 1e-12);
        assert!(sigma_profile(&p, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn valpha_bounded_by_level_one() {
        let p = ValphaParams::new(3, 1.0);
        let bound = p.level_value(3.0, 1);
        for k in 0..2000 {
            let x = [2.0 + k as f64 / 2000.0 + 1e-7, 0.3, 0.7];
            let v = v_alpha(&p, &x).unwrap();
            assert!(v >= 0.0 && v <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cantor_prefix_matches_sum() {
        for k in 1..6 {
            assert!((cantor_prefix(k, 1.0) - 2f64.powi(k as i32 - 1) / 3f64.powi(k as i32)).abs() < 1e-15);
        }
        assert!((cantor_prefix(1, 0.5) - (0.5 - 1.0 / 3.0)).abs() < 1e-15);
        assert!((cantor_prefix(2, 0.5) - 1.0 / 9.0).abs() < 1e-15);
    }

    fn brute_level_measures(params: &ValphaParams, p: u32, a: f64, b: f64, n: usize) -> Vec<f64> {
        let mut acc = vec![0.0; params.atom_depth as usize];
        let h = (b - a) / n as f64;
        for k in 0..n {
            let x = a + (k as f64 + 0.5) * h;
            if let Some(lv) = cantor_level_of(x) {
                if lv <= params.atom_depth && theta_beta(params.beta(lv), 3f64.powi(p as i32) * x) == 1 {
                    acc[lv as usize - 1] += h;
                }
            }
        }
        acc
    }

    #[test]
    fn atom_measures_match_midpoint_sampling() {
        let mut params = ValphaParams::new(3, 1.0);
        params.atom_depth = 8;
        for &(p, a, b) in &[(2u32, 0.0, 1.0), (3, 0.1, 0.47), (1, 0.3, 0.9), (5, 0.05, 0.06)] {
            let exact = level_window_measures(&params, p, a, b);
            let approx = brute_level_measures(&params, p, a, b, 400_000);
            for (e, s) in exact.iter().zip(&approx) {
                assert!((e - s).abs() < 2e-5 * (b - a) + 1e-9, "p={p} [{a},{b}]: {e} vs {s}");
            }
        }
    }

    #[test]
    fn atoms_sum_to_one_and_match_mean() {
        let params = ValphaParams::new(3, 1.0);
        let atoms = valpha_box_atoms(&params, &[1.45, -0.2, 0.3], 0.1);
        let total: f64 = atoms.parts.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Monte Carlo-free check: midpoint sampling of the mean along x1
        let n = 200_000;
        let mut mean = 0.0;
        for k in 0..n {
            let x1 = 1.35 + 0.2 * (k as f64 + 0.5) / n as f64;
            for x2 in [-0.25, -0.15] {
                mean += v_alpha(&params, &[x1, x2, 0.3]).unwrap();
            }
        }
        mean /= 2.0 * n as f64;
        assert!((atoms.mean() - mean).abs() < 1e-3 * atoms.mean().max(1e-3), "{} vs {mean}", atoms.mean());
    }

    #[test]
    fn y_matrix_cases() {
        let g = build_cube_grid(&[0.0, 0.0, 0.0], 1.0, 2).unwrap();
        let one = PotentialSpec::constant(3, 1.0).unwrap();
        let y = y_kernel_matrix(&one, &g, &g).unwrap();
        let c = g.cells();
        assert!((y.get(0, 1) - 1.0 / dist(&c[0].center, &c[1].center)).abs() < 1e-15);
        // nearest neighbours sit at distance 1, so the sentinel is 10
        assert_eq!(*y.get(0, 0), 10.0);
        let zero = PotentialSpec::constant(3, 0.0).unwrap();
        let y0 = y_kernel_matrix(&zero, &g, &g).unwrap();
        assert!((0..8).all(|i| (0..8).all(|j| *y0.get(i, j) == 0.0)));
        let three = PotentialSpec::constant(3, 3.0).unwrap();
        let y3 = y_kernel_matrix(&three, &g, &g).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((y3.get(i, j) - 3.0 * y.get(i, j)).abs() <= 1e-12 * y3.get(i, j));
            }
        }
    }

    #[test]
    fn y_two_point_toy() {
        let rows = DiscreteMeasureSpace::from_cells(
            vec![Cell::new(vec![0.0, 0.0, 0.0], 0.1)],
            vec![1.0],
            DomainKind::Custom,
            vec![0.0; 3],
            0.1,
        )
        .unwrap();
        let cols = DiscreteMeasureSpace::from_cells(
            vec![Cell::new(vec![2.0, 0.0, 0.0], 0.1)],
            vec![1.0],
            DomainKind::Custom,
            vec![2.0, 0.0, 0.0],
            0.1,
        )
        .unwrap();
        let v = PotentialSpec::custom(3, |x| if x[0] > 1.0 { 9.0 } else { 4.0 });
        let y = y_kernel_matrix(&v, &rows, &cols).unwrap();
        assert!((y.get(0, 0) - 6.0 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_csv_roundtrip() {
        let g = build_cube_grid(&[0.0, 0.0, 0.0], 1.0, 2).unwrap();
        let vals = vec![1.0, 2.5, 0.0, 4.0, 0.5, 0.25, 3.0, 7.0];
        let v = PotentialSpec::grid(g.clone(), vals.clone()).unwrap();
        let mut buf = Vec::new();
        v.write_grid_csv(&mut buf).unwrap();
        let back = PotentialSpec::read_grid_csv(g, buf.as_slice()).unwrap();
        match back {
            PotentialSpec::Grid { values, .. } => assert_eq!(values, vals),
            _ => unreachable!(),
        }
    }
}
