//! Finite cell decompositions of cubes and balls, the slab-rank map and
//! the capacity-weighted density measure on a ball.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma;

use crate::error::{domain, invalid, Error, Result};

/// Floor applied to the slab rank before evaluating `f'(s) ~ s^{-2/d}`.
pub const SLAB_RANK_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Cube,
    Ball,
    Custom,
}

/// An axis-aligned cube cell. `center` is the point used for kernel and
/// potential evaluation; for ball cells that straddle the sphere it is the
/// centroid of the part inside the ball, so it may differ from `box_center`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub center: Vec<f64>,
    pub box_center: Vec<f64>,
    pub half_side: f64,
}

impl Cell {
    pub fn new(center: Vec<f64>, half_side: f64) -> Self {
        Cell { box_center: center.clone(), center, half_side }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.box_center.iter().zip(x).all(|(c, xi)| (xi - c).abs() <= self.half_side * (1.0 + 1e-12))
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_side).powi(self.box_center.len() as i32)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteMeasureSpace {
    d: usize,
    cells: Vec<Cell>,
    weights: Vec<f64>,
    kind: DomainKind,
    center: Vec<f64>,
    size: f64,
    total: f64,
}

fn check_dim(d: usize) -> Result<()> {
    if d < 3 {
        return invalid(format!("dimension must be at least 3, got {d}"));
    }
    Ok(())
}

fn check_grid_args(y: &[f64], r: f64, n: usize) -> Result<()> {
    check_dim(y.len())?;
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("size must be positive, got {r}"));
    }
    if n == 0 {
        return invalid("n_per_axis must be positive");
    }
    if y.iter().any(|v| !v.is_finite()) {
        return invalid("center has non-finite coordinates");
    }
    Ok(())
}

/// Iterates the multi-indices of an `n^d` grid in lexicographic order.
fn grid_indices(d: usize, n: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.pow(d as u32);
    (0..total).map(move |mut k| {
        let mut idx = vec![0; d];
        for slot in idx.iter_mut().rev() {
            *slot = k % n;
            k /= n;
        }
        idx
    })
}

/// Builds the uniform `n^d` tiling of `Q_r(y) = y + [-r, r]^d`.
pub fn build_cube_grid(y: &[f64], r: f64, n_per_axis: usize) -> Result<DiscreteMeasureSpace> {
    check_grid_args(y, r, n_per_axis)?;
    let d = y.len();
    let h = r / n_per_axis as f64;
    let w = (2.0 * h).powi(d as i32);
    let cells: Vec<Cell> = grid_indices(d, n_per_axis)
        .map(|idx| {
            let c = idx.iter().zip(y).map(|(&i, yi)| yi - r + (2 * i + 1) as f64 * h).collect();
            Cell::new(c, h)
        })
        .collect();
    let weights = vec![w; cells.len()];
    Ok(DiscreteMeasureSpace::assemble(d, cells, weights, DomainKind::Cube, y.to_vec(), r))
}

/// Builds the clipped grid of `B_r(y)` from the `n^d` tiling of its bounding
/// cube. Cells fully inside keep their volume, cells fully outside are
/// dropped, the rest are estimated on `4^d` sub-cell midpoints.
pub fn build_ball_grid(y: &[f64], r: f64, n_per_axis: usize) -> Result<DiscreteMeasureSpace> {
    check_grid_args(y, r, n_per_axis)?;
    let d = y.len();
    let h = r / n_per_axis as f64;
    let vol = (2.0 * h).powi(d as i32);
    let sub = 4usize;
    let sub_offsets: Vec<Vec<f64>> = grid_indices(d, sub)
        .map(|idx| idx.iter().map(|&i| -h + (2 * i + 1) as f64 * h / sub as f64).collect())
        .collect();
    let r2 = r * r;
    let mut cells = Vec::new();
    let mut weights = Vec::new();
    for idx in grid_indices(d, n_per_axis) {
        let c: Vec<f64> = idx.iter().map(|&i| -r + (2 * i + 1) as f64 * h).collect();
        let far: f64 = c.iter().map(|ci| (ci.abs() + h).powi(2)).sum();
        let near: f64 = c.iter().map(|ci| (ci.abs() - h).max(0.0).powi(2)).sum();
        if near >= r2 {
            continue;
        }
        let shift = |p: &[f64]| p.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<f64>>();
        if far <= r2 {
            cells.push(Cell::new(shift(&c), h));
            weights.push(vol);
            continue;
        }
        let mut inside = 0usize;
        let mut centroid = vec![0.0; d];
        for off in &sub_offsets {
            let p: Vec<f64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
            if p.iter().map(|v| v * v).sum::<f64>() < r2 {
                inside += 1;
                centroid.iter_mut().zip(&p).for_each(|(s, v)| *s += v);
            }
        }
        if inside == 0 {
            continue;
        }
        centroid.iter_mut().for_each(|s| *s /= inside as f64);
        cells.push(Cell { center: shift(&centroid), box_center: shift(&c), half_side: h });
        weights.push(vol * inside as f64 / sub_offsets.len() as f64);
    }
    Ok(DiscreteMeasureSpace::assemble(d, cells, weights, DomainKind::Ball, y.to_vec(), r))
}

impl DiscreteMeasureSpace {
    fn assemble(d: usize, cells: Vec<Cell>, weights: Vec<f64>, kind: DomainKind, center: Vec<f64>, size: f64) -> Self {
        let total = weights.iter().sum();
        DiscreteMeasureSpace { d, cells, weights, kind, center, size, total }
    }

    /// A space from explicit cells. `size` is informational for custom domains.
    pub fn from_cells(
        cells: Vec<Cell>,
        weights: Vec<f64>,
        kind: DomainKind,
        center: Vec<f64>,
        size: f64,
    ) -> Result<Self> {
        let d = center.len();
        check_dim(d)?;
        if cells.len() != weights.len() || cells.is_empty() {
            return invalid("cells and weights must be non-empty and of equal length");
        }
        if cells.iter().any(|c| c.center.len() != d || c.box_center.len() != d) {
            return invalid("cell dimension mismatch");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("weights must be finite and non-negative");
        }
        let s = Self::assemble(d, cells, weights, kind, center, size);
        if s.total <= 0.0 {
            return invalid("total mass must be positive");
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn kind(&self) -> DomainKind {
        self.kind
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    /// Half-side of a cube domain, radius of a ball domain.
    pub fn size(&self) -> f64 {
        self.size
    }
    pub fn total_mass(&self) -> f64 {
        self.total
    }
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn lebesgue(&self) -> DensityMeasure {
        DensityMeasure { base: self.clone(), multipliers: vec![1.0; self.len()], label: DensityLabel::Lebesgue }
    }

    /// Keeps the cells selected by `keep`, preserving order.
    pub fn restrict(&self, keep: impl Fn(usize, &Cell) -> bool) -> Result<Self> {
        let (cells, weights): (Vec<_>, Vec<_>) = self
            .cells
            .iter()
            .zip(&self.weights)
            .enumerate()
            .filter(|(i, (c, _))| keep(*i, c))
            .map(|(_, (c, w))| (c.clone(), *w))
            .unzip();
        Self::from_cells(cells, weights, DomainKind::Custom, self.center.clone(), self.size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityLabel {
    Lebesgue,
    MuS,
    Custom,
}

/// A measure `mu = multiplier * Lebesgue` on the cells of a space.
#[derive(Debug, Clone)]
pub struct DensityMeasure {
    pub base: DiscreteMeasureSpace,
    pub multipliers: Vec<f64>,
    pub label: DensityLabel,
}

impl DensityMeasure {
    pub fn new(base: DiscreteMeasureSpace, multipliers: Vec<f64>, label: DensityLabel) -> Result<Self> {
        if multipliers.len() != base.len() {
            return invalid("one multiplier per cell is required");
        }
        if multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return invalid("multipliers must be finite and non-negative");
        }
        Ok(DensityMeasure { base, multipliers, label })
    }

    /// Per-cell masses `weight * multiplier`.
    pub fn masses(&self) -> Vec<f64> {
        self.base.weights().iter().zip(&self.multipliers).map(|(w, m)| w * m).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    /// `d mes / d mu` per cell, with the multiplier floored to keep it finite.
    pub fn alpha(&self) -> Vec<f64> {
        self.multipliers.iter().map(|m| 1.0 / m.max(SLAB_RANK_FLOOR)).collect()
    }

    /// Writes `cell_index, c1..cd, half_side, weight, density_multiplier`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.base.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["cell_index".to_string()];
        header.extend((1..=d).map(|i| format!("c{i}")));
        header.extend(["half_side", "weight", "density_multiplier"].map(String::from));
        w.write_record(&header)?;
        for (i, (cell, (wt, m))) in
            self.base.cells().iter().zip(self.base.weights().iter().zip(&self.multipliers)).enumerate()
        {
            let mut rec = vec![i.to_string()];
            rec.extend(cell.center.iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", cell.half_side));
            rec.push(format!("{wt:e}"));
            rec.push(format!("{m:e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the schema of [`DensityMeasure::write_csv`] into a custom-domain measure.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let ncol = rdr.headers()?.len();
        if ncol < 7 {
            return Err(Error::Parse("grid csv needs at least 3 coordinates".into()));
        }
        let d = ncol - 4;
        let (mut cells, mut weights, mut mult) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))))
                .collect::<Result<_>>()?;
            cells.push(Cell::new(nums[..d].to_vec(), nums[d]));
            weights.push(nums[d + 1]);
            mult.push(nums[d + 2]);
        }
        let base = DiscreteMeasureSpace::from_cells(cells, weights, DomainKind::Custom, vec![0.0; d], 0.0)?;
        DensityMeasure::new(base, mult, DensityLabel::Custom)
    }
}

/// Lebesgue measure of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0)
}

/// Surface area of the unit sphere `S^{d-1}`.
pub fn unit_sphere_area(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// Normalized measure of `{s in B_r(y) : s_1 <= x_1}`, by the
/// regularized incomplete beta form of the spherical cap volume.
pub fn slab_rank(space: &DiscreteMeasureSpace, x: &[f64]) -> Result<f64> {
    if space.kind() != DomainKind::Ball {
        return invalid("slab_rank needs a ball domain");
    }
    if x.len() != space.dim() {
        return invalid("point dimension mismatch");
    }
    let (y, r) = (space.center(), space.size());
    let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    if dist2.sqrt() > r * (1.0 + 1e-12) {
        return domain(format!("point at distance {} outside the closed ball of radius {r}", dist2.sqrt()));
    }
    Ok(slab_fraction(space.dim(), (x[0] - y[0]) / r))
}

/// Fraction of the unit ball in `R^d` with first coordinate `<= a`.
pub fn slab_fraction(d: usize, a: f64) -> f64 {
    let a = a.clamp(-1.0, 1.0);
    if a == 0.0 {
        return 0.5;
    }
    let half = 0.5 * beta_reg(0.5, (d as f64 + 1.0) / 2.0, a * a);
    if a > 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// `f'(t)` for `f(t) = t^{(d-2)/d}`.
pub fn f_prime(d: usize, t: f64) -> f64 {
    let d = d as f64;
    (d - 2.0) / d * t.powf(-2.0 / d)
}

/// Harmonic capacity `(d-2) sigma_{d-1} r^{d-2}` of a ball, with the raw
/// Dirichlet-integral normalization.
pub fn harmonic_cap_ball(d: usize, r: f64) -> Result<f64> {
    check_dim(d)?;
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("radius must be positive, got {r}"));
    }
    Ok((d as f64 - 2.0) * unit_sphere_area(d) * r.powi(d as i32 - 2))
}

/// The measure `mu_s = cap(B_r) f'(s_{r,y}(x)) m_{d,r}(dx)` on a ball grid.
///
/// Multipliers are cell averages of `f'(s)`: four Gauss points along the
/// first axis for interior cells, the inside sub-cell midpoints for clipped
/// cells. A bare center value loses several percent of the mass near the
/// pole where `f'(s)` blows up.
pub fn mu_s_measure(space: &DiscreteMeasureSpace) -> Result<DensityMeasure> {
    if space.kind() != DomainKind::Ball {
        return invalid("mu_s needs a ball domain");
    }
    let d = space.dim();
    let r = space.size();
    let y0 = space.center()[0];
    let cap = harmonic_cap_ball(d, r)?;
    let mes = unit_ball_volume(d) * r.powi(d as i32);
    let fp = |x1: f64| f_prime(d, slab_fraction(d, (x1 - y0) / r).max(SLAB_RANK_FLOOR));
    let gl = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
        (-0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_26, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    ];
    let sub = 4usize;
    let multipliers = space
        .cells()
        .iter()
        .zip(space.weights())
        .map(|(c, w)| {
            let h = c.half_side;
            let avg = if (w - c.volume()).abs() <= 1e-12 * c.volume() {
                gl.iter().map(|(x, wt)| 0.5 * wt * fp(c.box_center[0] + h * x)).sum::<f64>()
            } else {
                let mut acc = 0.0;
                let mut count = 0usize;
                for idx in grid_indices(d, sub) {
                    let p: Vec<f64> = idx
                        .iter()
                        .zip(&c.box_center)
                        .map(|(&i, b)| b - h + (2 * i + 1) as f64 * h / sub as f64)
                        .collect();
                    let dist2: f64 = p.iter().zip(space.center()).map(|(a, b)| (a - b).powi(2)).sum();
                    if dist2 < r * r {
                        acc += fp(p[0]);
                        count += 1;
                    }
                }
                if count == 0 {
                    fp(c.center[0])
                } else {
                    acc / count as f64
                }
            };
            cap * avg / mes
        })
        .collect();
    DensityMeasure::new(space.clone(), multipliers, DensityLabel::MuS)
}

/// Kolmogorov-Smirnov distance between the weighted law of `s_{r,y}` over
/// the cells and the uniform law on `[0, 1]`.
pub fn slab_rank_ks_distance(space: &DiscreteMeasureSpace) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = space
        .cells()
        .iter()
        .zip(space.weights())
        .map(|(c, w)| slab_rank(space, &c.center).map(|s| (s, *w)))
        .collect::<Result<_>>()?;
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = space.total_mass();
    let mut cum = 0.0;
    let mut ks: f64 = 0.0;
    for (s, w) in pts {
        ks = ks.max((cum / total - s).abs());
        cum += w;
        ks = ks.max((cum / total - s).abs());
    }
    Ok(ks)
}
