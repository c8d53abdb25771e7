//! Remaining tensor-level oracles: the dense-net finite-difference check,
//! convolution behavior and the Monte-Carlo density consistency of the
//! squashed Gaussian head.

use dmap_core::rng::Rng;
use dmap_core::tensor::{grad_check, mlp_forward, squashed_gaussian, Activation, ParamStore, Tape, Tensor};

#[test]
fn random_mlp_6_32_32_3_matches_finite_differences() {
    let mut store = ParamStore::new();
    let mut rng = Rng::new(0x632);
    let dims = [(6, 32), (32, 32), (32, 3)];
    for (i, (fan_in, fan_out)) in dims.iter().enumerate() {
        let bound = 1.0 / (*fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        let b: Vec<f64> = (0..*fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        store.insert(&format!("l{i}/w"), Tensor::new(vec![*fan_in, *fan_out], w).unwrap()).unwrap();
        store.insert(&format!("l{i}/b"), Tensor::vector(b)).unwrap();
    }
    let x = Tensor::new(vec![2, 6], (0..12).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap();
    let err = grad_check(&mut store, 1e-5, |tape, store| {
        let layers: Vec<_> = (0..3)
            .map(|i| {
                (
                    tape.param(store, store.id(&format!("l{i}/w")).unwrap()),
                    tape.param(store, store.id(&format!("l{i}/b")).unwrap()),
                )
            })
            .collect();
        let input = tape.constant(x.clone());
        let y = mlp_forward(tape, input, &layers, Activation::Relu).unwrap();
        // a nonlinear reduction so every output weight matters
        let t = tape.tanh(y);
        tape.sum_all(t)
    })
    .unwrap();
    assert!(err < 1e-6, "max relative error {err}");
}

#[test]
fn averaging_kernel_on_constant_input_is_shift_invariant() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::full(&[1, 1, 12], 3.5));
    let w = tape.input(Tensor::full(&[1, 1, 4], 0.25)); // averaging kernel
    let b = tape.input(Tensor::zeros(&[1]));
    let y = tape.conv1d(x, w, b, 2).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 5]);
    for &v in tape.value(y).data() {
        assert!((v - 3.5).abs() < 1e-12, "constant input must give constant output, got {v}");
    }
}

#[test]
fn conv1d_gradients_match_finite_differences() {
    let mut store = ParamStore::new();
    let mut rng = Rng::new(0xC04);
    store
        .insert("w", Tensor::new(vec![3, 2, 3], (0..18).map(|_| rng.uniform_range(-0.5, 0.5)).collect()).unwrap())
        .unwrap();
    store.insert("b", Tensor::new(vec![3], vec![0.1, -0.2, 0.3]).unwrap()).unwrap();
    store
        .insert("x", Tensor::new(vec![2, 2, 9], (0..36).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap())
        .unwrap();
    let err = grad_check(&mut store, 1e-5, |tape, store| {
        let w = tape.param(store, store.id("w").unwrap());
        let b = tape.param(store, store.id("b").unwrap());
        let x = tape.param(store, store.id("x").unwrap());
        let y = tape.conv1d(x, w, b, 2).unwrap();
        let t = tape.tanh(y);
        tape.sum_all(t)
    })
    .unwrap();
    assert!(err < 1e-6, "max relative error {err}");
}

#[test]
fn squashed_density_matches_a_monte_carlo_histogram() {
    // draw actions a = tanh(mean + std * z); the empirical probability of a
    // small interval around x must match exp(log_prob(x)) * width
    let (mean, log_std) = (0.3f64, -0.4f64);
    let std = log_std.exp();
    let mut rng = Rng::new(0x3_14);
    let n = 4_000_000usize;
    let targets = [0.1f64, 0.45, 0.8];
    let half_width = 0.01;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let a = (mean + std * rng.normal()).tanh();
        for (c, &x) in counts.iter_mut().zip(&targets) {
            if (a - x).abs() < half_width {
                *c += 1;
            }
        }
    }
    for (&x, &count) in targets.iter().zip(&counts) {
        // evaluate log_prob exactly at x by inverting the squash
        let u = x.atanh();
        let noise = (u - mean) / std;
        let mut tape = Tape::new();
        let m = tape.input(Tensor::new(vec![1, 1], vec![mean]).unwrap());
        let ls = tape.input(Tensor::new(vec![1, 1], vec![log_std]).unwrap());
        let nz = Tensor::new(vec![1, 1], vec![noise]).unwrap();
        let (_, lp) = squashed_gaussian(&mut tape, m, ls, Some(&nz), false);
        let density = tape.value(lp).data()[0].exp();
        let empirical = count as f64 / (n as f64 * 2.0 * half_width);
        let rel = (empirical - density).abs() / density;
        assert!(rel < 0.02, "density at {x}: histogram {empirical:.4} vs exp(log_prob) {density:.4} ({rel:.3})");
    }
}
