mod common;

use mumic_core::gradcore::Matrix;
use mumic_core::metrics::{evaluate, ScoredPredictions};
use proptest::prelude::*;

#[test]
fn small_shapes_match_brute_force_exactly() {
    let n = common::compare_metrics_exhaustively(8, 10, 7).unwrap();
    assert!(n > 10_000, "{n}");
}

proptest! {
    #[test]
    fn larger_random_cases_match(
        n in 1usize..12,
        l in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scores = common::random_scores(&mut rng, n, l, (seed % 3) as usize);
        let truth = Matrix::from_fn(n, l, |_, _| f64::from(u8::from(rng.gen_bool(0.3))));
        let o = common::brute_metrics(&scores, &truth);
        let ks: Vec<usize> = (1..=l).collect();
        let got = evaluate(&ScoredPredictions::new(scores, truth).unwrap(), &ks);
        match o.macro_map {
            None => prop_assert!(got.is_err()),
            Some(m) => {
                let r = got.unwrap();
                prop_assert_eq!(&r.ap_per_class, &o.ap);
                prop_assert_eq!(r.macro_map, m);
                prop_assert_eq!(Some(r.weighted_map), o.weighted_map);
                prop_assert_eq!(Some(r.gap), o.gap);
                let gk: Vec<Option<f64>> = r.gap_at_k.iter().map(|&(_, v)| Some(v)).collect();
                prop_assert_eq!(gk, o.gap_at_k);
            }
        }
    }
}
