mod common;

use aiwc::characterizer::{characterize, coverage_90, shannon_entropy, DEFAULT_HISTORY_LENGTH};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn features_ignore_work_item_block_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = common::random_trace(&mut rng);
        let shuffled = common::shuffle_blocks(&trace, &mut ChaCha8Rng::seed_from_u64(shuffle));
        let a = characterize(&trace, DEFAULT_HISTORY_LENGTH).unwrap();
        let b = characterize(&shuffled, DEFAULT_HISTORY_LENGTH).unwrap();
        prop_assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
    }

    #[test]
    fn fuzzed_traces_satisfy_the_invariants(seed in any::<u64>(), history in 1u32..24) {
        let trace = common::random_trace(&mut ChaCha8Rng::seed_from_u64(seed));
        let fv = characterize(&trace, history).unwrap();
        prop_assert!(fv.invariant_violations().is_empty(), "{:?}", fv.invariant_violations());
        prop_assert!(fv.local_memory_address_entropy.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn entropy_matches_the_direct_formula(counts in prop::collection::vec(1u64..10_000, 1..200)) {
        let h = common::histogram(&counts);
        let got = shannon_entropy(&h);
        prop_assert!((got - common::entropy_oracle(&counts)).abs() <= 1e-12);
        prop_assert!(got >= 0.0 && got <= (counts.len() as f64).log2() + 1e-12);
    }

    #[test]
    fn coverage_matches_exhaustive_search(counts in prop::collection::vec(1u64..1_000, 1..=8)) {
        prop_assert_eq!(coverage_90(&common::histogram(&counts)), common::coverage_90_oracle(&counts));
    }
}

#[test]
fn uniform_histograms_have_entropy_log2_n() {
    for n in [1usize, 2, 3, 7, 64, 1000] {
        let h = common::histogram(&vec![5; n]);
        assert!((shannon_entropy(&h) - (n as f64).log2()).abs() < 1e-12);
    }
}
