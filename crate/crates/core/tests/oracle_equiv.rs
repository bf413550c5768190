use coverable::checker::{brute_force_linearizable, check_atomicity};
use coverable::histgen::random_history;
use coverable::simnet::SimConfig;
use coverable::{vmwabd, Value};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn constructive_and_exhaustive_agree(seed in any::<u64>()) {
        let h = random_history(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let fast = check_atomicity(&h).unwrap();
        let slow = brute_force_linearizable(&h).unwrap();
        prop_assert_eq!(fast.passed(), slow.passed(), "{}\n{}\n{}", fast, slow, h.to_text());
        if !fast.passed() {
            prop_assert!(fast.counterexample.is_some());
        }
    }
}

/// Small simulated runs are linearizable on both routes.
#[test]
fn small_simulations_agree() {
    for seed in 0..200 {
        let cfg = SimConfig { seed, replicas: 3, writers: 2, readers: 1, ops_per_client: 2, crashes: seed as usize % 2, ..SimConfig::default() };
        let h = vmwabd::simulate(&cfg, None, Value::default()).unwrap().history;
        assert!(check_atomicity(&h).unwrap().passed(), "seed {seed}");
        assert!(brute_force_linearizable(&h).unwrap().passed(), "seed {seed}");
    }
}
