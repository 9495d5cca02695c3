//! The extremal problem `I_W(t) = inf { int_E W dmu : mu(E) >= t }`, its
//! relaxed closed form `J_W` and the two-sided rearrangement bounds.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rearrange::{rearrange_dec, rearrange_inc, WeightedSample};
use crate::scalar::Scalar;

/// Distinct `(value, weight)` classes allowed in [`brute_force_i`].
pub const MAX_GROUPS: usize = 22;
/// Search-node budget of [`brute_force_i`].
pub const NODE_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone)]
pub struct ExtremalInstance<T> {
    pub sample: WeightedSample<T>,
    pub t: T,
}

impl<T: Scalar> ExtremalInstance<T> {
    pub fn new(sample: WeightedSample<T>, t: T) -> Result<Self> {
        if t <= T::zero() || !t.approx_le(sample.total()) {
            return invalid(format!("t = {t:?} outside (0, {:?}]", sample.total()));
        }
        Ok(ExtremalInstance { sample, t })
    }
}

/// `J_W(t) = int_{W < W_*(t)} W dmu + (t - kappa^-) W_*(t)`.
pub fn solve_j<T: Scalar>(inst: &ExtremalInstance<T>) -> Result<T> {
    j_at(&inst.sample, &inst.t)
}

fn j_at<T: Scalar>(sample: &WeightedSample<T>, t: &T) -> Result<T> {
    let w_low = rearrange_inc(sample, t)?;
    let mut kappa = T::zero();
    let mut integral = T::zero();
    for (v, w) in sample.values().iter().zip(sample.weights()) {
        if *v < w_low {
            kappa = kappa + w.clone();
            integral = integral + v.clone() * w.clone();
        }
    }
    Ok(integral + (t.clone() - kappa) * w_low)
}

/// Exact minimizer of the extremal problem.
#[derive(Debug, Clone)]
pub struct BruteForce<T> {
    pub value: T,
    /// Atom indices of a minimizing set, ascending.
    pub members: Vec<usize>,
    pub nodes: u64,
}

struct Group<T> {
    value: T,
    weight: T,
    atoms: Vec<usize>,
}

struct Search<'a, T> {
    groups: &'a [Group<T>],
    suffix_mass: Vec<T>,
    t: T,
    best: Option<T>,
    best_counts: Vec<usize>,
    counts: Vec<usize>,
    nodes: u64,
}

impl<T: Scalar> Search<'_, T> {
    /// Fractional-knapsack bound: fill the remaining need from groups `g..`
    /// in ascending value order.
    fn lp_bound(&self, g: usize, need: &T) -> T {
        let mut need = need.clone();
        let mut cost = T::zero();
        for grp in &self.groups[g..] {
            if need <= T::zero() {
                break;
            }
            let cap = grp.weight.clone() * T::from_usize(grp.atoms.len()).unwrap();
            let take = if cap < need { cap } else { need.clone() };
            cost = cost + take.clone() * grp.value.clone();
            need = need - take;
        }
        cost
    }

    fn dfs(&mut self, g: usize, mass: T, cost: T) -> Result<()> {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return Err(Error::Capacity(format!("search exceeded {NODE_BUDGET} nodes")));
        }
        if mass >= self.t {
            if self.best.as_ref().map_or(true, |b| cost < *b) {
                self.best = Some(cost);
                self.best_counts = self.counts.clone();
            }
            return Ok(());
        }
        if g == self.groups.len() || mass.clone() + self.suffix_mass[g].clone() < self.t {
            return Ok(());
        }
        let need = self.t.clone() - mass.clone();
        if let Some(b) = &self.best {
            if cost.clone() + self.lp_bound(g, &need) >= *b {
                return Ok(());
            }
        }
        let grp = &self.groups[g];
        let mut c_max = 0;
        let mut covered = T::zero();
        while c_max < grp.atoms.len() && covered < need {
            covered = covered + grp.weight.clone();
            c_max += 1;
        }
        let (w, v) = (grp.weight.clone(), grp.value.clone());
        for c in (0..=c_max).rev() {
            let k = T::from_usize(c).unwrap();
            self.counts[g] = c;
            self.dfs(g + 1, mass.clone() + k.clone() * w.clone(), cost.clone() + k * w.clone() * v.clone())?;
        }
        self.counts[g] = 0;
        Ok(())
    }
}

/// Exact `I_W(t)` by branch and bound over classes of identical atoms.
pub fn brute_force_i<T: Scalar>(inst: &ExtremalInstance<T>) -> Result<BruteForce<T>> {
    let s = &inst.sample;
    let mut order: Vec<usize> = (0..s.len()).filter(|&i| s.weights()[i] > T::zero()).collect();
    order.sort_by(|&a, &b| {
        s.values()[a].partial_cmp(&s.values()[b]).unwrap().then(s.weights()[a].partial_cmp(&s.weights()[b]).unwrap())
    });
    let mut groups: Vec<Group<T>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if g.value == s.values()[i] && g.weight == s.weights()[i] => g.atoms.push(i),
            _ => groups.push(Group { value: s.values()[i].clone(), weight: s.weights()[i].clone(), atoms: vec![i] }),
        }
    }
    if groups.len() > MAX_GROUPS {
        return Err(Error::Capacity(format!("{} distinct atoms exceed the limit of {MAX_GROUPS}", groups.len())));
    }
    let mut suffix_mass = vec![T::zero(); groups.len() + 1];
    for g in (0..groups.len()).rev() {
        suffix_mass[g] =
            suffix_mass[g + 1].clone() + groups[g].weight.clone() * T::from_usize(groups[g].atoms.len()).unwrap();
    }
    let mut search = Search {
        groups: &groups,
        suffix_mass,
        t: inst.t.clone(),
        best: None,
        best_counts: vec![0; groups.len()],
        counts: vec![0; groups.len()],
        nodes: 0,
    };
    search.dfs(0, T::zero(), T::zero())?;
    let value = match search.best {
        Some(v) => v,
        // t within float slack of the total: only the full set qualifies
        None if inst.t.approx_le(s.total()) => {
            search.best_counts = groups.iter().map(|g| g.atoms.len()).collect();
            s.values().iter().zip(s.weights()).fold(T::zero(), |a, (v, w)| a + v.clone() * w.clone())
        }
        None => return invalid("no feasible set"),
    };
    let mut members: Vec<usize> =
        groups.iter().zip(&search.best_counts).flat_map(|(g, &c)| g.atoms[..c].iter().copied()).collect();
    members.sort_unstable();
    Ok(BruteForce { value, members, nodes: search.nodes })
}

#[derive(Debug, Clone)]
pub struct BoundCheck<T> {
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// `J_W(mu(X) - t/theta)` and `((theta - 1) t / theta) W^*(t)`.
    pub lower: (T, T),
    /// `J_W(mu(X) - t)` and `(mu(X) - t) W^*(t)`.
    pub upper: (T, T),
}

/// Two-sided estimate of `J_W` near the total mass through `W^*(t)`.
pub fn check_bounds<T: Scalar>(sample: &WeightedSample<T>, theta: &T, t: &T) -> Result<BoundCheck<T>> {
    let total = sample.total().clone();
    if *theta <= T::one() {
        return invalid(format!("theta must exceed 1, got {theta:?}"));
    }
    if *t <= T::zero() || *t >= total {
        return invalid(format!("t = {t:?} outside (0, {total:?})"));
    }
    let w_star = rearrange_dec(sample, t)?;
    let lower_lhs = j_at(sample, &(total.clone() - t.clone() / theta.clone()))?;
    let lower_rhs = (theta.clone() - T::one()) * t.clone() / theta.clone() * w_star.clone();
    let upper_lhs = j_at(sample, &(total.clone() - t.clone()))?;
    let upper_rhs = (total - t.clone()) * w_star;
    Ok(BoundCheck {
        lower_ok: lower_rhs.approx_le(&lower_lhs),
        upper_ok: upper_lhs.approx_le(&upper_rhs),
        lower: (lower_lhs, lower_rhs),
        upper: (upper_lhs, upper_rhs),
    })
}

/// Cumulative masses `mu(W <= u_k)` over the ascending distinct values.
pub fn level_boundaries<T: Scalar>(sample: &WeightedSample<T>) -> Vec<T> {
    let p = sample.dec_profile();
    let total = sample.total().clone();
    // mu(W <= u_k) = total - mu(W > u_k)
    let mut out: Vec<T> = Vec::with_capacity(p.levels.len());
    out.push(total.clone());
    for c in p.cumulative.iter().take(p.levels.len().saturating_sub(1)) {
        out.push(total.clone() - c.clone());
    }
    out.reverse();
    out.retain(|c| *c > T::zero());
    out.dedup();
    out
}

/// Splits every atom into `k` atoms of equal weight.
pub fn refine<T: Scalar>(sample: &WeightedSample<T>, k: usize) -> Result<WeightedSample<T>> {
    if k == 0 {
        return invalid("refinement factor must be positive");
    }
    let kk = T::from_usize(k).unwrap();
    let mut values = Vec::with_capacity(sample.len() * k);
    let mut weights = Vec::with_capacity(sample.len() * k);
    for (v, w) in sample.values().iter().zip(sample.weights()) {
        for _ in 0..k {
            values.push(v.clone());
            weights.push(w.clone() / kk.clone());
        }
    }
    WeightedSample::new(values, weights)
}

/// A random sample with rational values `a/4`, `a in 0..=16`, and positive
/// weights `b/6`, `b in 1..=12`; exact in either scalar type for small sizes.
pub fn random_sample<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> WeightedSample<T> {
    let values = (0..n).map(|_| T::from_ratio(rng.gen_range(0..=16), 4)).collect();
    let weights = (0..n).map(|_| T::from_ratio(rng.gen_range(1..=12), 6)).collect();
    WeightedSample::new(values, weights).expect("positive weights")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn inst(v: Vec<f64>, t: f64) -> ExtremalInstance<f64> {
        ExtremalInstance::new(WeightedSample::uniform(v).unwrap(), t).unwrap()
    }

    #[test]
    fn j_examples() {
        assert_eq!(solve_j(&inst(vec![1.0, 2.0, 3.0], 1.5)).unwrap(), 2.0);
        assert_eq!(solve_j(&inst(vec![2.5; 4], 3.0)).unwrap(), 7.5);
        let mut v = vec![0.0; 5];
        v.push(6.0);
        assert_eq!(solve_j(&inst(v, 5.5)).unwrap(), 3.0);
        assert!(ExtremalInstance::new(WeightedSample::uniform(vec![1.0]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let b = brute_force_i(&inst(vec![1.0, 2.0, 3.0], 1.5)).unwrap();
        assert_eq!((b.value, b.members), (3.0, vec![0, 1]));
        assert_eq!(brute_force_i(&inst(vec![2.0; 5], 3.0)).unwrap().value, 6.0);
        assert_eq!(brute_force_i(&inst(vec![1.0, 4.0, 2.0], 3.0)).unwrap().value, 7.0);
        let many = WeightedSample::new((0..23).map(|i| i as f64).collect(), vec![1.0; 23]).unwrap();
        let e = brute_force_i(&ExtremalInstance::new(many, 3.0).unwrap());
        assert!(matches!(e, Err(Error::Capacity(_))));
    }

    #[test]
    fn bound_examples() {
        let mut v = vec![0.0; 5];
        v.push(8.0);
        let s = WeightedSample::uniform(v).unwrap();
        let b = check_bounds(&s, &2.0, &1.0).unwrap();
        assert!(b.lower_ok && b.upper_ok);
        assert_eq!(b.lower, (4.0, 4.0));
        let c = WeightedSample::uniform(vec![3.0; 4]).unwrap();
        let b = check_bounds(&c, &3.0, &2.5).unwrap();
        assert!(b.lower_ok && b.upper_ok);
        assert!(check_bounds(&c, &1.0, &1.0).is_err());
        assert!(check_bounds(&c, &2.0, &4.0).is_err());
    }

    #[test]
    fn level_boundaries_are_ascending_cumulatives() {
        let q = |a, b| <BigRational as Scalar>::from_ratio(a, b);
        let s = WeightedSample::new(vec![q(2, 1), q(1, 1), q(2, 1)], vec![q(1, 2), q(1, 3), q(1, 1)]).unwrap();
        assert_eq!(level_boundaries(&s), vec![q(1, 3), q(11, 6)]);
    }
}
