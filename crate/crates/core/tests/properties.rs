//! Property tests over the numeric invariants.

use dmap_core::envs::{make_test_set, PERTURBATION_DIM};
use dmap_core::policies::nets::Tcn;
use dmap_core::tensor::{squashed_gaussian, Tape, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // every column of a softmax output is non-negative and sums to one,
    // for any finite input matrix
    #[test]
    fn softmax_columns_is_column_stochastic(
        rows in 1usize..8,
        cols in 1usize..6,
        scale in 0.0f64..100.0,
        seed in any::<u64>(),
    ) {
        let mut rng = dmap_core::rng::Rng::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform_range(-scale, scale)).collect();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![rows, cols], data).unwrap());
        let y = tape.softmax_cols(x);
        let v = tape.value(y);
        for j in 0..cols {
            let mut sum = 0.0;
            for i in 0..rows {
                let e = v.at2(i, j);
                prop_assert!(e >= 0.0, "negative softmax entry {e}");
                sum += e;
            }
            prop_assert!((sum - 1.0).abs() < 1e-9, "column {j} sums to {sum}");
        }
    }

    // the convolution output length obeys floor((l - k)/s) + 1 per layer
    #[test]
    fn conv_length_law(l in 1usize..64, k in 1usize..8, s in 1usize..5) {
        let out = Tcn::out_len(&[k], &[s], l);
        if l < k {
            prop_assert!(out.is_err());
        } else {
            prop_assert_eq!(out.unwrap(), (l - k) / s + 1);
        }
    }

    // squashed actions stay strictly inside (-1, 1) for any head output
    #[test]
    fn squashed_actions_are_strictly_bounded(
        mean in -50.0f64..50.0,
        log_std in -30.0f64..10.0,
        noise in -6.0f64..6.0,
        deterministic in any::<bool>(),
    ) {
        let mut tape = Tape::new();
        let m = tape.input(Tensor::new(vec![1, 1], vec![mean]).unwrap());
        let ls = tape.input(Tensor::new(vec![1, 1], vec![log_std]).unwrap());
        let n = Tensor::new(vec![1, 1], vec![noise]).unwrap();
        let (a, lp) = squashed_gaussian(&mut tape, m, ls, Some(&n), deterministic);
        let v = tape.value(a).data()[0];
        prop_assert!(v > -1.0 && v < 1.0, "action {v} left the open interval");
        prop_assert!(tape.value(lp).data()[0].is_finite());
    }

    // sampled morphologies always live in the cube
    #[test]
    fn test_sets_stay_inside_the_cube(sigma in 0.0f64..0.9, n in 1usize..30, seed in any::<u64>()) {
        for ctx in make_test_set(sigma, PERTURBATION_DIM, n, seed) {
            for &c in ctx.components() {
                prop_assert!(c.abs() <= sigma);
            }
            prop_assert!(ctx.intensity() <= sigma * (PERTURBATION_DIM as f64).sqrt() + 1e-12);
        }
    }
}
