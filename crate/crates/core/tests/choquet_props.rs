mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specdisc::choquet::{
    base_polyhedron_max, choquet_integral, in_base_polyhedron, in_core_star, random_bp_member, random_submodular,
};
use specdisc::{BigRational, FiniteMeasureVector};

fn integrand(raw: &[i64], n: usize) -> Vec<BigRational> {
    raw[..n].iter().map(|v| rat(*v, 3)).collect()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn integral_equals_base_polyhedron_max(seed in any::<u64>(), n in 1usize..=6, raw in prop::collection::vec(0i64..=12, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_submodular::<BigRational, _>(&mut rng, n).unwrap();
        let f = integrand(&raw, n);
        let c = choquet_integral(&v, &f).unwrap();
        let bp = base_polyhedron_max(&v, &f).unwrap();
        prop_assert_eq!(&bp.exhaustive.unwrap().0, &c);
        prop_assert_eq!(&bp.greedy, &c);
        for _ in 0..8 {
            let mu = random_bp_member(&mut rng, &v).unwrap();
            prop_assert!(in_base_polyhedron(&mu, &v));
            prop_assert!(mu.pair(&f) <= c);
        }
    }

    #[test]
    fn base_polyhedron_equals_core_star(seed in any::<u64>(), n in 1usize..=5, raw in prop::collection::vec(0i64..=12, 5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_submodular::<BigRational, _>(&mut rng, n).unwrap();
        let member = random_bp_member(&mut rng, &v).unwrap();
        prop_assert_eq!(in_base_polyhedron(&member, &v), in_core_star(&member, &v));
        // arbitrary vectors rescaled to the right total mass
        let w: Vec<BigRational> = raw[..n].iter().map(|x| rat(*x + 1, 1)).collect();
        let sum: BigRational = w.iter().cloned().sum();
        let top = v.value(v.full()).clone();
        let mu = FiniteMeasureVector::new(w.into_iter().map(|x| x * &top / &sum).collect()).unwrap();
        prop_assert_eq!(in_base_polyhedron(&mu, &v), in_core_star(&mu, &v));
    }

    #[test]
    fn dual_integral_calculus(seed in any::<u64>(), n in 1usize..=6, raw in prop::collection::vec(0i64..=12, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_submodular::<BigRational, _>(&mut rng, n).unwrap();
        let f = integrand(&raw, n);
        let big_n = rat(4, 1);
        let f_star: Vec<BigRational> = f.iter().map(|x| &big_n - x).collect();
        let lhs = choquet_integral(&v.dual(), &f_star).unwrap();
        let rhs = &big_n * v.value(v.full()) - choquet_integral(&v, &f).unwrap();
        prop_assert_eq!(lhs, rhs);
    }
}
