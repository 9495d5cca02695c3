//! The Bessel kernel `G_1`, a Riesz surrogate, the ball composition
//! `X(x, t, y, r)` and the `K_mu` / `X_mu` matrices.

use std::f64::consts::PI;
use std::io::Write;

use gauss_quad::GaussLegendre;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, invalid, Error, Result};
use crate::measure_space::{DensityMeasure, DiscreteMeasureSpace};
use crate::potentials::PotentialSpec;

/// Smallest radius held in the interpolation table; below it `G_1` is
/// integrated directly.
const TABLE_RHO_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Bessel1,
    /// `|x|^{-exponent}`.
    RieszPower(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSettings {
    /// Trapezoid nodes of the subordination integral (in `ln tau`).
    pub g1_nodes: usize,
    /// Points of the `ln(rho^{d-1} G_1)` interpolation table.
    pub table_points: usize,
    /// Largest tabulated radius; beyond it `G_1` is integrated directly.
    pub cutoff: f64,
    /// Gauss-Legendre nodes per polar angle in `compose_x`.
    pub angular_nodes: usize,
    /// Gauss-Legendre nodes per radial panel in `compose_x`.
    pub radial_nodes: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { g1_nodes: 400, table_points: 4096, cutoff: 50.0, angular_nodes: 16, radial_nodes: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub d: usize,
    #[serde(default)]
    pub quad: QuadratureSettings,
}

impl KernelSpec {
    pub fn bessel(d: usize) -> Self {
        KernelSpec { kind: KernelKind::Bessel1, d, quad: QuadratureSettings::default() }
    }

    pub fn riesz(d: usize, exponent: f64) -> Self {
        KernelSpec { kind: KernelKind::RieszPower(exponent), d, quad: QuadratureSettings::default() }
    }

    /// `|x|^{1-d}`, the default kernel of the criteria.
    pub fn surrogate(d: usize) -> Self {
        Self::riesz(d, d as f64 - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 {
            return invalid(format!("dimension must be at least 3, got {}", self.d));
        }
        if let KernelKind::RieszPower(a) = self.kind {
            if !(a > 0.0 && a < self.d as f64) {
                return invalid(format!("riesz exponent {a} outside (0, {})", self.d));
            }
        }
        let q = &self.quad;
        if q.g1_nodes < 16 || q.table_points < 16 || q.angular_nodes < 2 || q.radial_nodes < 2 {
            return invalid("quadrature node counts too small");
        }
        if !(q.cutoff > TABLE_RHO_MIN) {
            return invalid("cutoff radius too small");
        }
        Ok(())
    }
}

/// `G_1` at radius `rho > 0` by the trapezoid rule in `s = ln tau` on
/// `G_1 = pi^{-1/2} int_0^inf tau^{-1/2} e^{-tau} (4 pi tau)^{-d/2} e^{-rho^2/(4 tau)} dtau`.
/// The integrand decays double-exponentially at both ends, so the rule
/// converges geometrically in the node count.
pub fn bessel_g1_radial(d: usize, rho: f64, nodes: usize) -> f64 {
    let df = d as f64;
    let q = rho * rho / 4.0;
    let s_lo = q.ln() - 6.0;
    let s_hi = (4.0 * rho).max(50.0).ln() + 2.0;
    let h = (s_hi - s_lo) / nodes as f64;
    let ln_c = -0.5 * df * (4.0 * PI).ln() - 0.5 * PI.ln();
    let mut acc = 0.0;
    for k in 0..=nodes {
        let s = s_lo + k as f64 * h;
        let e = ln_c + 0.5 * (1.0 - df) * s - s.exp() - q * (-s).exp();
        let w = if k == 0 || k == nodes { 0.5 } else { 1.0 };
        acc += w * e.exp();
    }
    acc * h
}

/// `lim_{x -> 0} |x|^{d-1} G_1(x) = Gamma((d-1)/2) / (2 pi^{(d+1)/2})`.
pub fn bessel_small_constant(d: usize) -> f64 {
    let df = d as f64;
    gamma((df - 1.0) / 2.0) / (2.0 * PI.powf((df + 1.0) / 2.0))
}

/// Direct evaluation of the kernel at a point.
pub fn bessel_g1(spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != spec.d {
        return invalid("point dimension mismatch");
    }
    let rho = norm(x);
    if rho == 0.0 {
        return Err(Error::Singularity("kernel evaluated at the origin".into()));
    }
    Ok(match spec.kind {
        KernelKind::Bessel1 => bessel_g1_radial(spec.d, rho, spec.quad.g1_nodes),
        KernelKind::RieszPower(a) => rho.powf(-a),
    })
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// A prepared kernel: `G_1` is tabulated as `ln(rho^{d-1} G_1(rho))` on a
/// logarithmic grid and read back by 4-point Lagrange interpolation.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    table: Vec<f64>,
    u0: f64,
    du: f64,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        let (mut table, mut u0, mut du) = (Vec::new(), 0.0, 0.0);
        if spec.kind == KernelKind::Bessel1 {
            let n = spec.quad.table_points;
            u0 = TABLE_RHO_MIN.ln();
            du = (spec.quad.cutoff.ln() - u0) / (n - 1) as f64;
            let d = spec.d;
            table = (0..n)
                .into_par_iter()
                .map(|k| {
                    let u = u0 + k as f64 * du;
                    (d as f64 - 1.0) * u + bessel_g1_radial(d, u.exp(), spec.quad.g1_nodes).ln()
                })
                .collect();
        }
        Ok(Kernel { spec, table, u0, du })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    /// `rho^{d-1} G(rho)`, bounded near the origin for `G_1` and the surrogate.
    pub fn h(&self, rho: f64) -> f64 {
        let d = self.spec.d as f64;
        match self.spec.kind {
            KernelKind::RieszPower(a) => rho.powf(d - 1.0 - a),
            KernelKind::Bessel1 => {
                let u = rho.ln();
                let n = self.table.len();
                let pos = (u - self.u0) / self.du;
                if !(pos >= 0.0 && pos <= (n - 1) as f64) {
                    return rho.powf(d - 1.0) * bessel_g1_radial(self.spec.d, rho, self.spec.quad.g1_nodes);
                }
                let k = (pos.floor() as usize).clamp(1, n - 3);
                let f = pos - k as f64;
                // 4-point Lagrange on nodes k-1..k+2 at offset f from node k
                let (a, b, c, e) = (self.table[k - 1], self.table[k], self.table[k + 1], self.table[k + 2]);
                let v = -f * (f - 1.0) * (f - 2.0) / 6.0 * a + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * b
                    - (f + 1.0) * f * (f - 2.0) / 2.0 * c
                    + (f + 1.0) * f * (f - 1.0) / 6.0 * e;
                v.exp()
            }
        }
    }

    /// `G(rho)` for `rho > 0`.
    pub fn radial(&self, rho: f64) -> f64 {
        self.h(rho) * rho.powf(1.0 - self.spec.d as f64)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let rho = norm(x);
        if rho == 0.0 {
            return Err(Error::Singularity("kernel evaluated at the origin".into()));
        }
        Ok(self.radial(rho))
    }

    /// `int_{B_r(y)} G(x - s) G(s - t) ds`.
    ///
    /// The integrand is split by the partition of unity
    /// `chi_x = |s-t|^q / (|s-x|^q + |s-t|^q)`, `q = 2d`, and each part is
    /// integrated in polar coordinates around its own singular point, out to
    /// the exact exit radius of the ball. Both singularities are absorbed by
    /// the Jacobian, so Gauss-Legendre panels converge without subtraction.
    pub fn compose_x(&self, x: &[f64], t: &[f64], y: &[f64], r: f64) -> Result<f64> {
        let d = self.spec.d;
        if x.len() != d || t.len() != d || y.len() != d {
            return invalid("point dimension mismatch");
        }
        if !(r > 0.0) {
            return invalid("radius must be positive");
        }
        for p in [x, t] {
            if dist(p, y) > r * (1.0 + 1e-12) {
                return domain("point outside the closed ball");
            }
        }
        if dist(x, t) == 0.0 {
            return Err(Error::Singularity("compose_x needs x != t".into()));
        }
        let dirs = sphere_rule(d, self.spec.quad.angular_nodes)?;
        let radial =
            GaussLegendre::new(self.spec.quad.radial_nodes).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let radial: Vec<(f64, f64)> = radial.nodes().copied().zip(radial.weights().copied()).collect();
        Ok(self.polar_part(x, t, y, r, &dirs, &radial) + self.polar_part(t, x, y, r, &dirs, &radial))
    }

    fn polar_part(
        &self,
        a: &[f64],
        b: &[f64],
        y: &[f64],
        r: f64,
        dirs: &[(Vec<f64>, f64)],
        radial: &[(f64, f64)],
    ) -> f64 {
        let d = self.spec.d;
        let q = 2 * d as i32;
        let delta = dist(a, b);
        let frame = frame_towards(a, b);
        let ay: Vec<f64> = a.iter().zip(y).map(|(p, c)| p - c).collect();
        let ay2: f64 = ay.iter().map(|v| v * v).sum();
        let mut total = 0.0;
        let mut s = vec![0.0; d];
        let mut omega = vec![0.0; d];
        let mut cuts: Vec<f64> = Vec::with_capacity(24);
        for (local, w_dir) in dirs {
            omega.iter_mut().for_each(|o| *o = 0.0);
            for (l, e) in local.iter().zip(&frame) {
                omega.iter_mut().zip(e).for_each(|(o, ei)| *o += l * ei);
            }
            let bw: f64 = omega.iter().zip(&ay).map(|(o, v)| o * v).sum();
            let big_r = -bw + (bw * bw - (ay2 - r * r)).max(0.0).sqrt();
            if big_r <= 0.0 {
                continue;
            }
            cuts.clear();
            cuts.push(0.0);
            let mut c = delta / 8.0;
            while c < big_r {
                cuts.push(c);
                c *= 2.0;
            }
            let closest = delta * local[0];
            if closest > 0.0 && closest < big_r {
                cuts.push(closest);
            }
            cuts.push(big_r);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * big_r);
            let mut ray = 0.0;
            for win in cuts.windows(2) {
                let (lo, hi) = (win[0], win[1]);
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (node, w) in radial {
                    let rho = mid + half * node;
                    s.iter_mut().zip(a.iter().zip(&omega)).for_each(|(si, (ai, oi))| *si = ai + rho * oi);
                    let sb = dist(&s, b);
                    if sb == 0.0 {
                        continue;
                    }
                    let chi = 1.0 / (1.0 + (rho / sb).powi(q));
                    ray += w * half * self.h(rho) * self.radial(sb) * chi;
                }
            }
            total += w_dir * ray;
        }
        total
    }
}

/// Product rule on `S^{d-1}`: Gauss-Legendre in each polar angle (times the
/// `sin^k` Jacobian) and the trapezoid rule in the azimuth.
pub fn sphere_rule(d: usize, n: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    let gl = GaussLegendre::new(n).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let polar: Vec<(f64, f64)> =
        gl.nodes().zip(gl.weights()).map(|(x, w)| (0.5 * PI * (x + 1.0), 0.5 * PI * w)).collect();
    let n_az = 2 * n;
    // (partial direction, remaining radius factor, weight)
    let mut acc: Vec<(Vec<f64>, f64, f64)> = vec![(Vec::new(), 1.0, 1.0)];
    for k in 0..d.saturating_sub(2) {
        let power = (d - 2 - k) as i32;
        let mut next = Vec::with_capacity(acc.len() * polar.len());
        for (dir, rad, w) in &acc {
            for (phi, wp) in &polar {
                let mut nd = dir.clone();
                nd.push(rad * phi.cos());
                next.push((nd, rad * phi.sin(), w * wp * phi.sin().powi(power)));
            }
        }
        acc = next;
    }
    let mut out = Vec::with_capacity(acc.len() * n_az);
    for (dir, rad, w) in acc {
        for j in 0..n_az {
            let psi = 2.0 * PI * j as f64 / n_az as f64;
            let mut nd = dir.clone();
            nd.push(rad * psi.cos());
            nd.push(rad * psi.sin());
            out.push((nd, w * 2.0 * PI / n_az as f64));
        }
    }
    Ok(out)
}

/// Orthonormal frame whose first vector points from `a` to `b`.
fn frame_towards(a: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    let d = a.len();
    let delta = dist(a, b);
    let mut frame: Vec<Vec<f64>> = vec![a.iter().zip(b).map(|(p, q)| (q - p) / delta).collect()];
    for k in 0..d {
        if frame.len() == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        for e in &frame {
            let dot: f64 = v.iter().zip(e).map(|(p, q)| p * q).sum();
            v.iter_mut().zip(e).for_each(|(p, q)| *p -= dot * q);
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            frame.push(v.into_iter().map(|p| p / nv).collect());
        }
    }
    frame
}

/// Convenience wrapper building a [`Kernel`] for one composition.
pub fn compose_x(spec: &KernelSpec, x: &[f64], t: &[f64], y: &[f64], r: f64) -> Result<f64> {
    Kernel::new(*spec)?.compose_x(x, t, y, r)
}

#[derive(Debug, Clone)]
pub struct BandEstimate {
    pub a_est: f64,
    pub b_est: f64,
    pub ratios: Vec<f64>,
}

/// Samples pairs uniformly in `B_r(y)` and records `X |x - t|^{d-2}`.
pub fn kernel_band_check<R: Rng>(
    kernel: &Kernel,
    y: &[f64],
    r: f64,
    r0: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<BandEstimate> {
    if !(r > 0.0 && r <= r0) {
        return invalid(format!("need 0 < r <= r0, got r = {r}, r0 = {r0}"));
    }
    if n_pairs == 0 {
        return invalid("n_pairs must be positive");
    }
    let d = kernel.dim();
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let x = sample_ball(rng, y, r);
        let t = sample_ball(rng, y, r);
        if dist(&x, &t) > 1e-3 * r {
            pairs.push((x, t));
        }
    }
    let ratios: Vec<f64> = pairs
        .par_iter()
        .map(|(x, t)| kernel.compose_x(x, t, y, r).map(|v| v * dist(x, t).powi(d as i32 - 2)))
        .collect::<Result<_>>()?;
    let a_est = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let b_est = ratios.iter().copied().fold(0.0, f64::max);
    Ok(BandEstimate { a_est, b_est, ratios })
}

/// Uniform point in `B_r(y)` by rejection from the bounding cube.
pub fn sample_ball<R: Rng>(rng: &mut R, y: &[f64], r: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = y.iter().map(|c| c + r * rng.gen_range(-1.0..1.0)).collect();
        if dist(&p, y) < r {
            return p;
        }
    }
}

/// A dense row-major matrix over the cells of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn is_symmetric(&self, rtol: f64) -> bool {
        (0..self.n).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self.get(i, j), self.get(j, i));
                (a - b).abs() <= rtol * a.abs().max(b.abs())
            })
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "value"])?;
        for i in 0..self.n {
            for j in 0..self.n {
                w.write_record([i.to_string(), j.to_string(), format!("{:e}", self.get(i, j))])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Values of `G` at the `4^d` sub-cell midpoints of `cell`, the sub-cell
/// containing `s` contributing zero.
fn singular_cell_average(kernel: &Kernel, cell: &crate::measure_space::Cell, s: &[f64]) -> f64 {
    let d = s.len();
    let sub = 4usize;
    let h = cell.half_side;
    let mut acc = 0.0;
    let count = sub.pow(d as u32);
    let mut p = vec![0.0; d];
    for k in 0..count {
        let mut rem = k;
        let mut in_singular = true;
        for (i, pi) in p.iter_mut().enumerate() {
            let idx = rem % sub;
            rem /= sub;
            *pi = cell.box_center[i] - h + (2 * idx + 1) as f64 * h / sub as f64;
            in_singular &= (s[i] - *pi).abs() <= h / sub as f64;
        }
        if !in_singular {
            acc += kernel.radial(dist(&p, s));
        }
    }
    acc / count as f64
}

/// `K_mu(s_i, s_j) = sum_k G(x_k - s_i) G(x_k - s_j) mu_k` over the cells
/// `x_k` of `mu`, at the cell centers `s_i` of `space`. A kernel factor
/// whose cell contains the evaluation point is replaced by its sub-cell
/// average, so the matrix stays a Gram matrix.
pub fn k_mu_matrix(kernel: &Kernel, space: &DiscreteMeasureSpace, mu: &DensityMeasure) -> Result<KernelMatrix> {
    if space.dim() != kernel.dim() || mu.base.dim() != kernel.dim() {
        return invalid("dimension mismatch between kernel, space and measure");
    }
    let masses = mu.masses();
    let n = space.len();
    let g: Vec<Vec<f64>> = mu
        .base
        .cells()
        .par_iter()
        .map(|cell| {
            space
                .cells()
                .iter()
                .map(|s| {
                    if cell.contains(&s.center) {
                        singular_cell_average(kernel, cell, &s.center)
                    } else {
                        kernel.radial(dist(&cell.center, &s.center))
                    }
                })
                .collect()
        })
        .collect();
    let entries: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            g.iter().zip(&masses).map(|(gk, m)| gk[i] * gk[j] * m).sum()
        })
        .collect();
    Ok(KernelMatrix { n, entries })
}

/// `X_mu(s, t) = sqrt V(s) sqrt V(t) alpha_mu(s) alpha_mu(t) K_mu(s, t)` with
/// `alpha_mu = 1 / multiplier` on the cells of `mu`.
pub fn x_mu_matrix(kernel: &Kernel, v: &PotentialSpec, mu: &DensityMeasure) -> Result<KernelMatrix> {
    let k = k_mu_matrix(kernel, &mu.base, mu)?;
    let alpha = mu.alpha();
    let sv: Vec<f64> = mu.base.cells().iter().map(|c| v.value(&c.center).map(f64::sqrt)).collect::<Result<_>>()?;
    let f: Vec<f64> = sv.iter().zip(&alpha).map(|(s, a)| s * a).collect();
    let n = k.n;
    let entries = (0..n * n).map(|ij| f[ij / n] * f[ij % n] * k.entries[ij]).collect();
    Ok(KernelMatrix { n, entries })
}

/// Two-column `(|x|, G(|x|))` profile on a logarithmic grid.
pub fn write_profile_dat<W: Write>(
    kernel: &Kernel,
    rho_min: f64,
    rho_max: f64,
    points: usize,
    mut out: W,
) -> Result<()> {
    if !(rho_min > 0.0 && rho_max > rho_min && points >= 2) {
        return invalid("profile needs 0 < rho_min < rho_max and at least 2 points");
    }
    writeln!(out, "# |x| G(|x|)")?;
    let step = (rho_max / rho_min).ln() / (points - 1) as f64;
    for k in 0..points {
        let rho = rho_min * (step * k as f64).exp();
        writeln!(out, "{rho:.12e} {:.12e}", kernel.radial(rho))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure_space::unit_sphere_area;

    /// `K_1(r)` from `int_0^inf e^{-r cosh u} cosh u du` by the trapezoid rule.
    fn bessel_k1(r: f64) -> f64 {
        let h = 0.01;
        (0..4000)
            .map(|k| {
                let u = k as f64 * h;
                let w = if k == 0 { 0.5 } else { 1.0 };
                w * (-r * u.cosh()).exp() * u.cosh()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn g1_matches_closed_form_in_three_dimensions() {
        for rho in [1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let exact = bessel_k1(rho) / (2.0 * PI * PI * rho);
            let got = bessel_g1_radial(3, rho, 400);
            assert!((got / exact - 1.0).abs() < 1e-9, "rho {rho}: {got} vs {exact}");
        }
    }

    #[test]
    fn g1_small_argument_and_monotonicity() {
        let spec = KernelSpec::bessel(3);
        let g = bessel_g1(&spec, &[1e-3, 0.0, 0.0]).unwrap();
        let scaled = g * 1e-6 * 2.0 * PI * PI;
        assert!((0.95..=1.05).contains(&scaled));
        assert!((bessel_small_constant(3) - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        let k = Kernel::new(spec).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let v = k.radial(1e-3 * 1.2f64.powi(i));
            assert!(v < prev);
            prev = v;
        }
        assert!(matches!(bessel_g1(&spec, &[0.0; 3]), Err(Error::Singularity(_))));
    }

    #[test]
    fn g1_radial_symmetry_and_table() {
        let spec = KernelSpec::bessel(4);
        let a = bessel_g1(&spec, &[0.3, 0.4, 0.0, 1.2]).unwrap();
        let b = bessel_g1(&spec, &[1.3, 0.0, 0.0, 0.0]).unwrap();
        assert!((a / b - 1.0).abs() < 1e-10);
        let k = Kernel::new(spec).unwrap();
        for rho in [2e-6, 1e-3, 0.37, 3.3, 40.0, 70.0] {
            let direct = bessel_g1_radial(4, rho, 400);
            assert!((k.radial(rho) / direct - 1.0).abs() < 1e-8, "rho {rho}");
        }
    }

    #[test]
    fn g1_node_doubling() {
        for d in [3, 5] {
            let mut rho = 1e-3;
            while rho <= 10.0 {
                let a = bessel_g1_radial(d, rho, 400);
                let b = bessel_g1_radial(d, rho, 800);
                assert!((a / b - 1.0).abs() < 1e-6);
                rho *= 1.7;
            }
        }
    }

    #[test]
    fn sphere_rule_integrates_polynomials() {
        for d in [3, 4, 5] {
            let rule = sphere_rule(d, 16).unwrap();
            let area: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((area / unit_sphere_area(d) - 1.0).abs() < 1e-12);
            // int w_1^2 = area / d
            let m2: f64 = rule.iter().map(|(p, w)| w * p[0] * p[0]).sum();
            let err = (m2 / (unit_sphere_area(d) / d as f64) - 1.0).abs();
            assert!(err < 1e-12);
            assert!(rule.iter().all(|(p, _)| (norm(p) - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn compose_matches_yukawa_in_large_ball() {
        // G_1 * G_1 = G_2 = e^{-|x|}/(4 pi |x|) in R^3; truncation at r = 25 is negligible.
        let mut spec = KernelSpec::bessel(3);
        spec.quad.cutoff = 64.0;
        let k = Kernel::new(spec).unwrap();
        for delta in [0.05, 0.3, 1.0, 2.5] {
            let x = [delta / 2.0, 0.1, 0.0];
            let t = [-delta / 2.0, 0.1, 0.0];
            let got = k.compose_x(&x, &t, &[0.0; 3], 25.0).unwrap();
            let exact = (-delta).exp() / (4.0 * PI * delta);
            assert!((got / exact - 1.0).abs() < 2e-3, "delta {delta}: {got} vs {exact}");
        }
    }

    #[test]
    fn compose_riesz_near_pair_matches_whole_space_minus_tail() {
        // int_{R^3} |x-s|^{-2}|s-t|^{-2} ds = pi^3 / |x-t|; the outside of B_1 adds about 4 pi.
        let k = Kernel::new(KernelSpec::surrogate(3)).unwrap();
        let delta = 0.01;
        let got = k.compose_x(&[delta / 2.0, 0.0, 0.0], &[-delta / 2.0, 0.0, 0.0], &[0.0; 3], 1.0).unwrap();
        let approx = PI.powi(3) / delta - 4.0 * PI;
        assert!((got / approx - 1.0).abs() < 1e-3, "{got} vs {approx}");
    }

    #[test]
    fn compose_symmetry_and_self_convergence() {
        let spec = KernelSpec::bessel(3);
        let k = Kernel::new(spec).unwrap();
        let (x, t) = ([0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]);
        let a = k.compose_x(&x, &t, &[0.0; 3], 1.0).unwrap();
        let b = k.compose_x(&t, &x, &[0.0; 3], 1.0).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
        let mut fine = spec;
        fine.quad.angular_nodes *= 2;
        fine.quad.radial_nodes *= 2;
        let c = Kernel::new(fine).unwrap().compose_x(&x, &t, &[0.0; 3], 1.0).unwrap();
        assert!(a > 0.0 && a.is_finite());
        assert!((a / c - 1.0).abs() < 5e-4, "{a} vs {c}");
        assert!(matches!(k.compose_x(&x, &x, &[0.0; 3], 1.0), Err(Error::Singularity(_))));
    }
}
