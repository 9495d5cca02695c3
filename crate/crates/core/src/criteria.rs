//! Discreteness criteria evaluated on finite grids, the brute-force
//! capacitary chain, and trend sweeps over cubes moving off to infinity.

use std::collections::BTreeMap;
use std::io::Write;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernels::{k_mu_matrix, x_mu_matrix, Kernel};
use crate::measure_space::{build_cube_grid, mu_s_measure, DensityMeasure, DiscreteMeasureSpace};
use crate::partitions::{xi_admissible, xi_axes, DenseSystem};
use crate::potentials::{atoms_sample, y_atom_matrix, Atoms, PotentialSpec, ValphaParams};
use crate::rearrange::{rearrange_dec, repeated_rearrange, Matrix2D, WeightedSample};

/// `gamma(r)` with values in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaFunction {
    /// `r^alpha`.
    Power(f64),
    /// Piecewise linear through `(r, gamma)` knots sorted by `r`, constant outside.
    Table(Vec<(f64, f64)>),
}

impl GammaFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            GammaFunction::Power(a) if !(*a > 0.0 && a.is_finite()) => invalid("gamma exponent must be positive"),
            GammaFunction::Table(k) if k.is_empty() => invalid("empty gamma table"),
            GammaFunction::Table(k) => {
                if k.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return invalid("gamma table radii must increase");
                }
                if k.iter().any(|(r, g)| !(*r > 0.0 && *g > 0.0 && *g < 1.0)) {
                    return invalid("gamma table values must lie in (0, 1)");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        let g = match self {
            GammaFunction::Power(a) => r.powf(*a),
            GammaFunction::Table(k) => {
                let i = k.partition_point(|(x, _)| *x < r);
                if i == 0 {
                    k[0].1
                } else if i == k.len() {
                    k[k.len() - 1].1
                } else {
                    let ((r0, g0), (r1, g1)) = (k[i - 1], k[i]);
                    g0 + (g1 - g0) * (r - r0) / (r1 - r0)
                }
            }
        };
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::Domain(format!("gamma({r}) = {g} outside (0, 1)")));
        }
        Ok(g)
    }

    /// Whether `limsup r^{-2} gamma(r) = infinity`, decided symbolically for
    /// the power kind; `None` for tables.
    pub fn satisfies_growth_condition(&self) -> Option<bool> {
        match self {
            GammaFunction::Power(a) => Some(*a < 2.0),
            GammaFunction::Table(_) => None,
        }
    }
}

fn sample_of(space: &DiscreteMeasureSpace, atoms: &[Atoms]) -> Result<WeightedSample<f64>> {
    let (values, weights) = atoms_sample(space, atoms);
    WeightedSample::new(values, weights)
}

/// `V^*(t; space)` with `V` resolved into cell atoms.
pub fn single_on_space(v: &PotentialSpec, space: &DiscreteMeasureSpace, t: f64) -> Result<f64> {
    let atoms = v.space_atoms(space)?;
    rearrange_dec(&sample_of(space, &atoms)?, &t)
}

/// `(Y^*)^*(t; rows, cols)`, rearranging in the row variable first.
pub fn double_on_spaces(
    v: &PotentialSpec,
    rows: &DiscreteMeasureSpace,
    cols: &DiscreteMeasureSpace,
    t: f64,
) -> Result<f64> {
    let ra = v.space_atoms(rows)?;
    let ca = v.space_atoms(cols)?;
    let y = y_atom_matrix(rows, &ra, cols, &ca)?;
    repeated_rearrange(&y, &t, &t)
}

fn check_cube_args(r: f64, grid_n: usize) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return invalid("r must be positive");
    }
    if grid_n < 2 {
        return invalid("grid resolution must be at least 2");
    }
    Ok(())
}

/// `V^*(gamma(r) mes(Q_r(y)); Q_r(y))` on the `grid_n^d` grid of `Q_r(y)`.
pub fn crit_single(v: &PotentialSpec, y: &[f64], r: f64, gamma: &GammaFunction, grid_n: usize) -> Result<f64> {
    check_cube_args(r, grid_n)?;
    let space = build_cube_grid(y, r, grid_n)?;
    let psi = gamma.eval(r)? * space.total_mass();
    single_on_space(v, &space, psi)
}

/// `(Y^*)^*(psi(r); Q_r(y))` with `psi(r) = gamma(r) mes(Q_r(y))`.
pub fn crit_repeated(v: &PotentialSpec, y: &[f64], r: f64, gamma: &GammaFunction, grid_n: usize) -> Result<f64> {
    check_cube_args(r, grid_n)?;
    let space = build_cube_grid(y, r, grid_n)?;
    let psi = gamma.eval(r)? * space.total_mass();
    double_on_spaces(v, &space, &space, psi)
}

/// `(sqrt(d) r)^{2-d}`, the factor relating the two criteria on `Q_r(y)`.
pub fn repeated_vs_single_factor(d: usize, r: f64) -> f64 {
    ((d as f64).sqrt() * r).powi(2 - d as i32)
}

/// How admissible m-adic cubes are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MadicStrategy {
    /// Every admissible cube (or pair).
    Exhaustive,
    /// For potentials depending on the first coordinate only inside the
    /// ambient cube, on systems whose boxes span the full transverse range:
    /// cubes are grouped by their first-axis profile and only extreme
    /// placements are evaluated.
    FirstAxis,
}

/// Inputs shared by the m-adic criteria.
#[derive(Debug, Clone)]
pub struct MadicSetup<'a> {
    pub system: &'a DenseSystem,
    pub n: u32,
    pub gamma: GammaFunction,
    /// Grid resolution inside each m-adic cube.
    pub grid_n: usize,
    pub strategy: MadicStrategy,
}

impl MadicSetup<'_> {
    fn side(&self) -> f64 {
        (self.system.m as f64).powi(-(self.n as i32))
    }

    /// `psi(m, n) = gamma(m^{-n}) mes(Q(0, n))`.
    pub fn psi(&self) -> Result<f64> {
        let side = self.side();
        Ok(self.gamma.eval(side)? * side.powi(self.system.dim() as i32))
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("n must be at least 1");
        }
        if self.grid_n == 0 {
            return invalid("grid resolution must be positive");
        }
        for j in 1..=self.n as usize {
            if xi_axes(self.system, self.n, j).iter().all(|axes| axes.iter().any(|a| a.is_empty())) {
                return Err(Error::Precondition(format!("Xi_{}(l, {j}) is empty", self.n)));
            }
        }
        Ok(())
    }

    fn cube_space(&self, corner: &[f64]) -> Result<DiscreteMeasureSpace> {
        let h = self.side() / 2.0;
        let c: Vec<f64> = corner.iter().map(|x| x + h).collect();
        build_cube_grid(&c, h, self.grid_n)
    }

    /// Distinct first-axis corners over levels `1..=n`, and whether every
    /// box admits the full transverse range.
    fn first_axis_corners(&self) -> (Vec<BigRational>, bool) {
        let full = (self.system.m as u64).pow(self.n);
        let mut corners = Vec::new();
        let mut transverse_full = true;
        for j in 1..=self.n as usize {
            for axes in xi_axes(self.system, self.n, j) {
                if axes[0].is_empty() {
                    continue;
                }
                transverse_full &= axes[1..].iter().all(|a| a.len() as u64 == full);
                corners.extend(axes[0].iter().cloned());
            }
        }
        corners.sort();
        corners.dedup();
        (corners, transverse_full)
    }

    fn transverse_corner(&self, far: bool) -> Vec<f64> {
        let span = 1.0 - self.side();
        self.system.ell[1..].iter().map(|l| *l as f64 + if far { span } else { 0.0 }).collect()
    }

    fn all_corners(&self) -> Vec<Vec<f64>> {
        let mut all: Vec<Vec<BigRational>> =
            (1..=self.n as usize).flat_map(|j| xi_admissible(self.system, self.n, j)).collect();
        all.sort();
        all.dedup();
        all.iter().map(|xi| xi.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()).collect()
    }
}

fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Upper bound on the number of cubes or pairs the exhaustive strategy visits.
pub const EXHAUSTIVE_LIMIT: usize = 200_000;

/// `min over xi in Xi_n(l, 1..n) of V^*(psi(m, n); Q(xi, n))`.
pub fn crit_madic_single(v: &PotentialSpec, setup: &MadicSetup) -> Result<f64> {
    setup.check()?;
    if v.dim() != setup.system.dim() {
        return invalid("dimension mismatch between potential and system");
    }
    let psi = setup.psi()?;
    let corners: Vec<Vec<f64>> = match setup.strategy {
        MadicStrategy::Exhaustive => {
            let all = setup.all_corners();
            if all.len() > EXHAUSTIVE_LIMIT {
                return Err(Error::Capacity(format!("{} admissible cubes", all.len())));
            }
            all
        }
        MadicStrategy::FirstAxis => {
            let (xs, _) = setup.first_axis_corners();
            let rest = setup.transverse_corner(false);
            xs.iter().map(|x| std::iter::once(to_f64(x)).chain(rest.iter().copied()).collect()).collect()
        }
    };
    corners
        .par_iter()
        .map(|c| single_on_space(v, &setup.cube_space(c)?, psi))
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))
}

/// The pair-distance bound `(sqrt(d)/theta) m^{-(n-2)}` on cube corners.
pub fn madic_pair_bound(setup: &MadicSetup) -> f64 {
    let d = setup.system.dim() as f64;
    let theta = to_f64(&setup.system.theta);
    d.sqrt() / theta * (setup.system.m as f64).powi(2 - setup.n as i32)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn profile_key(atoms: &[Atoms]) -> Vec<(u64, u64)> {
    atoms.iter().flat_map(|a| a.parts.iter().map(|(v, w)| (v.to_bits(), w.to_bits()))).collect()
}

/// Result of [`crit_madic_double`] with the minimizing pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MadicDouble {
    pub value: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub pairs_evaluated: usize,
}

/// `min over admissible (xi, eta) with |xi - eta| <= (sqrt(d)/theta) m^{-(n-2)}`
/// of `(Y^*)^*(psi(m, n); Q(xi, n), Q(eta, n))`.
pub fn crit_madic_double(v: &PotentialSpec, setup: &MadicSetup) -> Result<MadicDouble> {
    setup.check()?;
    if v.dim() != setup.system.dim() {
        return invalid("dimension mismatch between potential and system");
    }
    let psi = setup.psi()?;
    let bound = madic_pair_bound(setup);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = match setup.strategy {
        MadicStrategy::Exhaustive => {
            let all = setup.all_corners();
            if all.len().saturating_mul(all.len()) > EXHAUSTIVE_LIMIT {
                return Err(Error::Capacity(format!("{} admissible cubes", all.len())));
            }
            let mut out = Vec::new();
            for a in &all {
                for b in &all {
                    if dist(a, b) <= bound * (1.0 + 1e-12) {
                        out.push((a.clone(), b.clone()));
                    }
                }
            }
            out
        }
        MadicStrategy::FirstAxis => first_axis_pairs(v, setup, bound)?,
    };
    if pairs.is_empty() {
        return Err(Error::Precondition("no admissible pair within the distance bound".into()));
    }
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|(a, b)| double_on_spaces(v, &setup.cube_space(a)?, &setup.cube_space(b)?, psi))
        .collect::<Result<_>>()?;
    let (k, value) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |(bk, bv), (k, v)| if v < bv { (k, v) } else { (bk, bv) });
    Ok(MadicDouble { value, xi: pairs[k].0.clone(), eta: pairs[k].1.clone(), pairs_evaluated: pairs.len() })
}

/// Candidate pairs for the first-axis reduction. Moving one cube further
/// away along an axis (a translation, or a reflection when the cubes share
/// the slot) lowers `Y` pointwise, so the minimum sits at maximal transverse
/// separation and, within two groups of identical first-axis profiles, at
/// the extreme first-axis placements or at equal first-axis slots.
fn first_axis_pairs(v: &PotentialSpec, setup: &MadicSetup, bound: f64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let (xs, transverse_full) = setup.first_axis_corners();
    if !transverse_full {
        return invalid("first-axis reduction needs boxes spanning the full transverse range");
    }
    if xs.is_empty() {
        return Err(Error::Precondition("no admissible cubes".into()));
    }
    let d = setup.system.dim();
    let near = setup.transverse_corner(false);
    let far = setup.transverse_corner(true);
    let span = to_f64(xs.last().expect("non-empty")) - to_f64(&xs[0]);
    let transverse = (1.0 - setup.side()) * ((d - 1) as f64).sqrt();
    if (span * span + transverse * transverse).sqrt() > bound * (1.0 + 1e-12) {
        return invalid("pair bound binds inside the ambient cube; use the exhaustive strategy");
    }
    let corner = |x: f64, t: &[f64]| -> Vec<f64> { std::iter::once(x).chain(t.iter().copied()).collect() };
    // group first-axis slots by the atoms of their cube
    let keyed: Vec<(Vec<(u64, u64)>, f64)> = xs
        .par_iter()
        .map(|x| {
            let x = to_f64(x);
            let space = setup.cube_space(&corner(x, &near))?;
            Ok((profile_key(&v.space_atoms(&space)?), x))
        })
        .collect::<Result<_>>()?;
    let mut groups: BTreeMap<Vec<(u64, u64)>, Vec<f64>> = BTreeMap::new();
    for (k, x) in keyed {
        groups.entry(k).or_default().push(x);
    }
    let groups: Vec<(f64, f64)> = groups
        .values()
        .map(|g| (g.iter().copied().fold(f64::INFINITY, f64::min), g.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    let mut pairs = Vec::new();
    for (ga, &(a_min, a_max)) in groups.iter().enumerate() {
        for (gb, &(b_min, b_max)) in groups.iter().enumerate() {
            let mut cand = vec![(a_min, b_max), (a_max, b_min)];
            if ga == gb {
                cand.push((a_min, a_min));
            }
            cand.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
            cand.dedup();
            for (a, b) in cand {
                pairs.push((corner(a, &near), corner(b, &far)));
            }
        }
    }
    Ok(pairs)
}

/// Both sides of the capacitary chain on a small space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitaryCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub psi: f64,
}

impl CapacitaryCheck {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs * (1.0 - 1e-9) - 1e-300
    }
}

/// Largest cell count accepted by [`crit_capacitary_bruteforce`].
pub const CAPACITARY_MAX_CELLS: usize = 12;

/// `lhs = min over F with mu(F) <= (gamma/theta) mu(X)` of
/// `sum_{s,t notin F} sqrt V(s) K_mu(s,t) sqrt V(t) mes(s) mes(t)` and
/// `rhs = ((theta-1) psi / theta)^2 (X_mu^*)^*(psi)` with `psi = gamma mu(X)`.
pub fn crit_capacitary_bruteforce(
    v: &PotentialSpec,
    kernel: &Kernel,
    mu: &DensityMeasure,
    gamma: f64,
    theta: f64,
) -> Result<CapacitaryCheck> {
    let n = mu.base.len();
    if n > CAPACITARY_MAX_CELLS {
        return Err(Error::Capacity(format!("{n} cells exceed the subset enumeration limit")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return invalid("gamma must lie in (0, 1)");
    }
    if !(theta > 1.0 && theta.is_finite()) {
        return invalid("theta must exceed 1");
    }
    let k = k_mu_matrix(kernel, &mu.base, mu)?;
    let x = x_mu_matrix(kernel, v, mu)?;
    let masses = mu.masses();
    let total = mu.total_mass();
    let psi = gamma * total;
    let sv: Vec<f64> = mu.base.cells().iter().map(|c| v.value(&c.center).map(f64::sqrt)).collect::<Result<_>>()?;
    let f: Vec<f64> = sv.iter().zip(mu.base.weights()).map(|(s, w)| s * w).collect();
    let cap = gamma / theta * total * (1.0 + 1e-12);
    let lhs = (0u32..1 << n)
        .into_par_iter()
        .filter(|mask| (0..n).filter(|i| mask >> i & 1 == 1).map(|i| masses[i]).sum::<f64>() <= cap)
        .map(|mask| {
            let keep: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
            keep.iter()
                .flat_map(|&i| keep.iter().map(move |&j| (i, j)))
                .map(|(i, j)| f[i] * f[j] * k.get(i, j))
                .sum::<f64>()
        })
        .reduce(|| f64::INFINITY, f64::min);
    let xm = Matrix2D::new(masses.clone(), masses, x.entries)?;
    let rep = repeated_rearrange(&xm, &psi, &psi)?;
    let factor = (theta - 1.0) * psi / theta;
    Ok(CapacitaryCheck { lhs, rhs: factor * factor * rep, psi })
}

/// Ratio `Z^*(t mu_s(X); mu_s) / V^*(t mes(X))` with `Z = alpha_{mu_s} V` on a
/// ball grid, `t` a mass fraction. `None` when `V^*` vanishes.
pub fn mu_s_weighted_ratio(v: &PotentialSpec, ball: &DiscreteMeasureSpace, t: f64) -> Result<Option<f64>> {
    if !(t > 0.0 && t <= 1.0) {
        return invalid("mass fraction must lie in (0, 1]");
    }
    let mu = mu_s_measure(ball)?;
    let vals: Vec<f64> = ball.cells().iter().map(|c| v.value(&c.center)).collect::<Result<_>>()?;
    let z: Vec<f64> = vals.iter().zip(mu.alpha()).map(|(v, a)| v * a).collect();
    let zs = WeightedSample::new(z, mu.masses())?;
    let vs = WeightedSample::new(vals, ball.weights().to_vec())?;
    let den = rearrange_dec(&vs, &(t * vs.total()))?;
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(rearrange_dec(&zs, &(t * zs.total()))? / den))
}

/// Criterion values along a sequence of centers with their trend.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: String,
    pub centers: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// `window_minima[k] = min(values[k..])`.
    pub window_minima: Vec<f64>,
    pub diverging: bool,
    pub params: Vec<(String, String)>,
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Tail minima `m_k = min(v_k, ..., v_last)`.
pub fn tail_minima(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for k in (0..out.len().saturating_sub(1)).rev() {
        out[k] = out[k].min(out[k + 1]);
    }
    out
}

/// Diverging iff there are at least 3 windows and their minima strictly increase.
pub fn is_diverging(window_minima: &[f64]) -> bool {
    window_minima.len() >= 3 && window_minima.windows(2).all(|w| w[1] > w[0])
}

impl CriterionReport {
    pub fn from_values(
        id: &str,
        centers: Vec<Vec<f64>>,
        values: Vec<f64>,
        params: Vec<(String, String)>,
    ) -> Result<Self> {
        if centers.len() != values.len() {
            return invalid("one value per center");
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return invalid("criterion values must be non-negative");
        }
        let window_minima = tail_minima(&values);
        let diverging = is_diverging(&window_minima);
        Ok(CriterionReport { id: id.to_string(), centers, values, window_minima, diverging, params })
    }

    /// CSV `center_1..center_d,value,window,trend_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.centers.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=d).map(|i| format!("center_{i}")).collect();
        header.extend(["value".into(), "window".into(), "trend_flag".into()]);
        w.write_record(&header)?;
        for ((c, v), m) in self.centers.iter().zip(&self.values).zip(&self.window_minima) {
            let mut rec: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            rec.extend([v.to_string(), m.to_string(), self.diverging.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Two columns `|center|_inf value`.
    pub fn write_dat<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}: |center|_inf value", self.id)?;
        for (c, v) in self.centers.iter().zip(&self.values) {
            writeln!(out, "{} {}", sup_norm(c), v)?;
        }
        Ok(())
    }
}

/// Evaluates `eval` at each center (in parallel) and summarizes the trend.
/// Centers need strictly increasing sup norms and there must be at least 3.
pub fn divergence_sweep<F>(
    id: &str,
    centers: Vec<Vec<f64>>,
    params: Vec<(String, String)>,
    eval: F,
) -> Result<CriterionReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if centers.len() < 3 {
        return invalid("a sweep needs at least 3 centers");
    }
    if centers.windows(2).any(|w| sup_norm(&w[1]) <= sup_norm(&w[0])) {
        return invalid("centers must have strictly increasing sup norm");
    }
    let values: Vec<f64> = centers.par_iter().map(|c| eval(c)).collect::<Result<_>>()?;
    CriterionReport::from_values(id, centers, values, params)
}

/// The cube `Q_{3^{-j}}(y_j)` with `y_j = (3^{-j} + j, 0, ..., 0)` whose first
/// coordinate range starts at the left end of the first level-`j` gap.
pub fn valpha_probe_cube(d: usize, j: u32) -> (Vec<f64>, f64) {
    let r = 3f64.powi(-(j as i32));
    let mut y = vec![0.0; d];
    y[0] = j as f64 + r;
    (y, r)
}

/// Closed-form supremum of `V_alpha` over [`valpha_probe_cube`]: the cube
/// meets unit cubes `l = (j, l_2, ..., l_d)` with `l_i in {-1, 0}`, and its
/// first-coordinate range `[0, 3^{1-j}]` meets gaps of level `j` and deeper only.
pub fn valpha_probe_bound(params: &ValphaParams, j: u32) -> f64 {
    let d = params.d;
    let mut best: f64 = 0.0;
    for mask in 0u32..1 << (d - 1) {
        let mut l = vec![0; d];
        l[0] = j as i64;
        for i in 1..d {
            l[i] = if mask >> (i - 1) & 1 == 1 { -1 } else { 0 };
        }
        best = best.max(params.growth.eval(&l, d));
    }
    best * params.level_value(1.0, j.max(1))
}

/// The product Cantor system of `V_alpha` inside `l + [0, 1]^d`.
pub fn valpha_system(ell: &[i64], depth: u32) -> Result<DenseSystem> {
    let base = crate::partitions::cantor_system(depth)?;
    crate::partitions::product_system(&base, ell.len())?.translated(ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure_space::{build_cube_grid, DensityLabel};
    use crate::partitions::{full_cube_system, product_system};
    use crate::potentials::PotentialSpec;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn gamma_kinds() {
        let g = GammaFunction::Power(1.0);
        assert_eq!(g.eval(0.25).unwrap(), 0.25);
        assert_eq!(g.satisfies_growth_condition(), Some(true));
        assert_eq!(GammaFunction::Power(2.0).satisfies_growth_condition(), Some(false));
        let t = GammaFunction::Table(vec![(0.1, 0.2), (0.5, 0.6)]);
        assert!((t.eval(0.3).unwrap() - 0.4).abs() < 1e-15);
        assert!(GammaFunction::Power(1.0).eval(1.5).is_err());
    }

    #[test]
    fn single_constant_and_half_indicator() {
        let c = PotentialSpec::constant(3, 2.5).unwrap();
        assert_eq!(crit_single(&c, &[5.0, 0.0, 0.0], 0.5, &GammaFunction::Power(1.0), 4).unwrap(), 2.5);
        let half = PotentialSpec::custom(3, |x| if x[0] > 0.0 { 1.0 } else { 0.0 });
        assert_eq!(crit_single(&half, &[0.0; 3], 0.25, &GammaFunction::Power(1.0), 4).unwrap(), 1.0);
    }

    #[test]
    fn repeated_trivial_cases() {
        let g = GammaFunction::Power(1.0);
        let zero = PotentialSpec::constant(3, 0.0).unwrap();
        assert_eq!(crit_repeated(&zero, &[0.0; 3], 0.5, &g, 4).unwrap(), 0.0);
        let one = PotentialSpec::constant(3, 1.0).unwrap();
        let r = 0.5;
        let val = crit_repeated(&one, &[0.0; 3], r, &g, 4).unwrap();
        assert!(val >= 1.0 / (2.0 * 3f64.sqrt() * r));
    }

    #[test]
    fn tail_minima_and_flags() {
        assert_eq!(tail_minima(&[3.0, 1.0, 2.0, 5.0]), vec![1.0, 1.0, 2.0, 5.0]);
        assert!(!is_diverging(&tail_minima(&[3.0, 1.0, 2.0, 5.0])));
        assert!(is_diverging(&tail_minima(&[1.0, 2.0, 3.0])));
        assert!(!is_diverging(&tail_minima(&[1.0, 1.0, 1.0])));
        assert!(!is_diverging(&tail_minima(&[1.0, 2.0])));
    }

    #[test]
    fn sweep_growing_and_flat() {
        let g = GammaFunction::Power(1.0);
        let centers: Vec<Vec<f64>> = (1..6).map(|k| vec![2.0 * k as f64, 0.0, 0.0]).collect();
        let grow = PotentialSpec::custom(3, |x| x.iter().map(|v| v * v).sum());
        let rep = divergence_sweep("single", centers.clone(), vec![], |y| crit_single(&grow, y, 0.5, &g, 4)).unwrap();
        assert!(rep.diverging);
        let flat = PotentialSpec::constant(3, 1.0).unwrap();
        let rep = divergence_sweep("single", centers, vec![], |y| crit_single(&flat, y, 0.5, &g, 4)).unwrap();
        assert!(!rep.diverging);
        let bad = vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]];
        assert!(divergence_sweep("x", bad, vec![], |_| Ok(1.0)).is_err());
    }

    #[test]
    fn madic_full_cube_constant() {
        let sys = full_cube_system(vec![1, 0, 0], 3, 3, rat(1, 9)).unwrap();
        let c = PotentialSpec::constant(3, 4.0).unwrap();
        let setup = MadicSetup {
            system: &sys,
            n: 1,
            gamma: GammaFunction::Power(1.0),
            grid_n: 2,
            strategy: MadicStrategy::Exhaustive,
        };
        assert_eq!(crit_madic_single(&c, &setup).unwrap(), 4.0);
        let zero = PotentialSpec::constant(3, 0.0).unwrap();
        assert_eq!(crit_madic_double(&zero, &setup).unwrap().value, 0.0);
    }

    #[test]
    fn madic_empty_level_is_precondition_error() {
        let sys = valpha_system(&[1, 0, 0], 3).unwrap();
        let c = PotentialSpec::constant(3, 1.0).unwrap();
        // level-2 gaps are too short for 3-adic cubes of side 1/3
        let setup = MadicSetup {
            system: &sys,
            n: 1,
            gamma: GammaFunction::Power(1.0),
            grid_n: 2,
            strategy: MadicStrategy::Exhaustive,
        };
        assert!(crit_madic_single(&c, &setup).is_ok());
        let base = crate::partitions::cantor_system(1).unwrap();
        let short = product_system(&base, 3).unwrap();
        let setup = MadicSetup {
            system: &short,
            n: 2,
            gamma: GammaFunction::Power(1.0),
            grid_n: 2,
            strategy: MadicStrategy::Exhaustive,
        };
        assert!(matches!(crit_madic_single(&c, &setup), Err(Error::Precondition(_))));
    }

    #[test]
    fn madic_same_cube_matches_direct_evaluation() {
        let sys = valpha_system(&[2, 0, 0], 4).unwrap();
        let v = PotentialSpec::valpha(ValphaParams::new(3, 1.0)).unwrap();
        let setup = MadicSetup {
            system: &sys,
            n: 1,
            gamma: GammaFunction::Power(1.0),
            grid_n: 3,
            strategy: MadicStrategy::Exhaustive,
        };
        let corner = [2.0 + 1.0 / 3.0, 0.0, 0.0];
        let space = setup.cube_space(&corner).unwrap();
        let direct = double_on_spaces(&v, &space, &space, setup.psi().unwrap()).unwrap();
        let via = build_cube_grid(&[2.5, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 6.0, 3).unwrap();
        let again = double_on_spaces(&v, &via, &via, setup.psi().unwrap()).unwrap();
        assert_eq!(direct, again);
    }

    #[test]
    fn first_axis_reduction_matches_exhaustive() {
        let v = PotentialSpec::valpha(ValphaParams::new(3, 1.0)).unwrap();
        for (ell, n) in [(vec![1i64, 0, 0], 1u32), (vec![2, 0, 0], 2), (vec![1, 0, 0], 2), (vec![0, 1, 0], 2)] {
            let sys = valpha_system(&ell, 6).unwrap();
            let mk = |strategy| MadicSetup { system: &sys, n, gamma: GammaFunction::Power(1.0), grid_n: 2, strategy };
            let ex = crit_madic_double(&v, &mk(MadicStrategy::Exhaustive)).unwrap();
            let red = crit_madic_double(&v, &mk(MadicStrategy::FirstAxis)).unwrap();
            assert!(
                (ex.value - red.value).abs() <= 1e-12 * ex.value.max(1e-300),
                "{ell:?} n={n}: {} vs {}",
                ex.value,
                red.value
            );
            let ex1 = crit_madic_single(&v, &mk(MadicStrategy::Exhaustive)).unwrap();
            let red1 = crit_madic_single(&v, &mk(MadicStrategy::FirstAxis)).unwrap();
            assert_eq!(ex1, red1);
        }
    }

    #[test]
    fn capacitary_trivial_cases() {
        let kernel = Kernel::new(crate::kernels::KernelSpec::bessel(3)).unwrap();
        let g = build_cube_grid(&[0.0; 3], 0.5, 2).unwrap();
        let mu = DensityMeasure::new(g.clone(), vec![1.0; 8], DensityLabel::Lebesgue).unwrap();
        let zero = PotentialSpec::constant(3, 0.0).unwrap();
        let z = crit_capacitary_bruteforce(&zero, &kernel, &mu, 0.5, 2.0).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        // tiny gamma leaves only F = {} feasible
        let one = PotentialSpec::constant(3, 1.0).unwrap();
        let c = crit_capacitary_bruteforce(&one, &kernel, &mu, 1e-3, 2.0).unwrap();
        let k = k_mu_matrix(&kernel, &g, &mu).unwrap();
        let full: f64 = k.entries.iter().sum::<f64>() * g.weights()[0] * g.weights()[0];
        assert!((c.lhs - full).abs() <= 1e-12 * full);
        assert!(c.holds());
    }

    #[test]
    fn valpha_probe_bound_formula() {
        let p = ValphaParams::new(3, 1.0);
        let b1 = valpha_probe_bound(&p, 1);
        assert!((b1 - 2.0 * 8.0 * 3f64.sqrt() / 3.0).abs() < 1e-12);
        let (y, r) = valpha_probe_cube(3, 2);
        assert!((y[0] - (2.0 + 1.0 / 9.0)).abs() < 1e-15 && (r - 1.0 / 9.0).abs() < 1e-15);
    }
}
