mod common;

use common::{brute_coeff, random_series, rel_err};
use langford::series2::{corner_stripped_coeff, TaylorPoly2};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-13;

fn max_entry_err(a: &TaylorPoly2, b: &TaylorPoly2) -> f64 {
    let scale = a.coeffs().iter().map(|c| c.norm()).fold(1.0, f64::max);
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| (x - y).norm() / scale)
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chain_matches_multi_index_sum(seed in any::<u64>(), order in 0usize..9, arity in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs: Vec<_> = (0..arity).map(|_| random_series(&mut rng, order)).collect();
        let refs: Vec<&TaylorPoly2> = fs.iter().collect();
        let got = TaylorPoly2::product_chain(&refs).unwrap();
        for (m, n) in TaylorPoly2::indices(order) {
            let (want, scale) = brute_coeff(&refs, m, n, false);
            prop_assert!(rel_err(got.get(m, n), want, scale) < TOL, "({m},{n})");
        }
    }

    #[test]
    fn corner_stripped_matches_oracle(seed in any::<u64>(), order in 1usize..8, arity in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs: Vec<_> = (0..arity).map(|_| random_series(&mut rng, order)).collect();
        let refs: Vec<&TaylorPoly2> = fs.iter().collect();
        for (m, n) in TaylorPoly2::indices(order).filter(|&(m, n)| m + n > 0) {
            let got = corner_stripped_coeff(&refs, m, n).unwrap();
            let (want, _) = brute_coeff(&refs, m, n, true);
            let (_, scale) = brute_coeff(&refs, m, n, false);
            prop_assert!(rel_err(got, want, scale) < TOL);
        }
    }

    #[test]
    fn corner_identity(seed in any::<u64>(), order in 1usize..10, arity in 2usize..5) {
        // full product = stripped sum + the terms linear in one factor's (m,n)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs: Vec<_> = (0..arity).map(|_| random_series(&mut rng, order)).collect();
        let refs: Vec<&TaylorPoly2> = fs.iter().collect();
        let full = TaylorPoly2::product_chain(&refs).unwrap();
        for (m, n) in TaylorPoly2::indices(order).filter(|&(m, n)| m + n > 0) {
            let mut linear = Complex64::new(0.0, 0.0);
            for j in 0..arity {
                let mut t = fs[j].get(m, n);
                for (i, f) in fs.iter().enumerate() {
                    if i != j {
                        t *= f.get(0, 0);
                    }
                }
                linear += t;
            }
            let stripped = corner_stripped_coeff(&refs, m, n).unwrap();
            let (_, scale) = brute_coeff(&refs, m, n, false);
            prop_assert!(rel_err(stripped + linear, full.get(m, n), scale) < TOL);
        }
    }

    #[test]
    fn product_commutes(seed in any::<u64>(), order in 0usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_series(&mut rng, order);
        let b = random_series(&mut rng, order);
        let ab = a.product(&b).unwrap();
        let ba = b.product(&a).unwrap();
        prop_assert!(max_entry_err(&ab, &ba) < TOL);
    }

    #[test]
    fn product_associates(seed in any::<u64>(), order in 0usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_series(&mut rng, order);
        let b = random_series(&mut rng, order);
        let c = random_series(&mut rng, order);
        let left = a.product(&b).unwrap().product(&c).unwrap();
        let right = a.product(&b.product(&c).unwrap()).unwrap();
        for (m, n) in TaylorPoly2::indices(order) {
            let (_, scale) = brute_coeff(&[&a, &b, &c], m, n, false);
            prop_assert!(rel_err(left.get(m, n), right.get(m, n), scale) < TOL);
        }
    }

    #[test]
    fn rescale_composes(seed in any::<u64>(), order in 0usize..16,
                        s1 in 0.2f64..2.0, s2 in 0.2f64..2.0, t1 in 0.2f64..2.0, t2 in 0.2f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_series(&mut rng, order);
        let twice = a.rescale(s1, s2).unwrap().rescale(t1, t2).unwrap();
        let once = a.rescale(s1 * t1, s2 * t2).unwrap();
        for (m, n) in TaylorPoly2::indices(order) {
            let w = once.get(m, n);
            prop_assert!((twice.get(m, n) - w).norm() <= TOL * w.norm().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn product_evaluates_to_product_of_values(seed in any::<u64>(), order in 0usize..6) {
        // truncation-free when the sum of orders fits: pad with zeros
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small_a = random_series(&mut rng, order);
        let small_b = random_series(&mut rng, order);
        let big = 2 * order;
        let pad = |p: &TaylorPoly2| TaylorPoly2::from_fn(big, |m, n| {
            if m + n <= order { p.get(m, n) } else { Complex64::new(0.0, 0.0) }
        });
        let a = pad(&small_a);
        let b = pad(&small_b);
        let ab = a.product(&b).unwrap();
        let t1 = Complex64::new(0.3, -0.2);
        let t2 = Complex64::new(-0.1, 0.4);
        let want = a.evaluate(t1, t2) * b.evaluate(t1, t2);
        prop_assert!((ab.evaluate(t1, t2) - want).norm() < 1e-12 * want.norm().max(1.0));
    }
}

#[test]
fn rescale_by_one_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_series(&mut rng, 12);
    assert_eq!(a.rescale(1.0, 1.0).unwrap(), a);
}
