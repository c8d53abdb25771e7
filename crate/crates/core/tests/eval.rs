//! Zero-shot protocol behavior: determinism, report structure, input
//! immutability, limb sweeps and adaptation curves.

use dmap_core::envs::{testset::TestSet, EnvSpec, MorphologyContext, PERTURBATION_DIM};
use dmap_core::eval::{adaptation_speed, limb_sweep, rollout, zero_shot_eval, DistShift, EvalError};
use dmap_core::io::checkpoint_bytes;
use dmap_core::policies::{Policy, PolicyConfig, PolicyKind};
use dmap_core::rng::fnv1a;

fn small_policy(spec: &EnvSpec, seed: u64) -> Policy {
    let mut cfg = PolicyConfig::for_env(PolicyKind::Simple, spec);
    cfg.simple_hiddens = vec![16, 16];
    Policy::new(cfg, spec.name, seed).unwrap()
}

#[test]
fn zero_shot_runs_one_episode_per_morphology_and_is_deterministic() {
    let spec = EnvSpec::hopper2d();
    let policy = small_policy(&spec, 5);
    let ts = TestSet::generate(&spec, 0.3, 100, 7);
    let a = zero_shot_eval(&policy, &spec, &ts, Some(0.3)).unwrap();
    let b = zero_shot_eval(&policy, &spec, &ts, Some(0.3)).unwrap();
    assert_eq!(a.rewards, b.rewards, "deterministic protocol");
    assert_eq!(a.rewards.len(), 100, "exactly one episode per test morphology");
    assert_eq!(a.shift, Some(DistShift::Iid));
    assert_eq!(a.intensities.len(), 100);
    // sem * sqrt(n) = sample sd
    let sd = dmap_core::eval::sample_sd(&a.rewards);
    assert!((a.sem * (100f64).sqrt() - sd).abs() < 1e-12);
}

#[test]
fn shift_flag_follows_the_sigma_comparison() {
    let spec = EnvSpec::hopper2d();
    let policy = small_policy(&spec, 6);
    let ts = TestSet::generate(&spec, 0.5, 10, 7);
    let ood = zero_shot_eval(&policy, &spec, &ts, Some(0.3)).unwrap();
    assert_eq!(ood.shift, Some(DistShift::Ood));
    let iid = zero_shot_eval(&policy, &spec, &ts, Some(0.5)).unwrap();
    assert_eq!(iid.shift, Some(DistShift::Iid));
    let unknown = zero_shot_eval(&policy, &spec, &ts, None).unwrap();
    assert_eq!(unknown.shift, None);
}

#[test]
fn evaluation_never_mutates_the_policy() {
    let spec = EnvSpec::hopper2d();
    let policy = small_policy(&spec, 8);
    let before = fnv1a(&checkpoint_bytes(&policy));
    let ts = TestSet::generate(&spec, 0.3, 5, 3);
    zero_shot_eval(&policy, &spec, &ts, None).unwrap();
    assert_eq!(fnv1a(&checkpoint_bytes(&policy)), before);
}

#[test]
fn cross_env_evaluation_is_rejected() {
    let hopper = EnvSpec::hopper2d();
    let walker = EnvSpec::walker2d();
    let policy = small_policy(&hopper, 9);
    let ts = TestSet::generate(&walker, 0.3, 5, 3);
    assert!(matches!(
        zero_shot_eval(&policy, &walker, &ts, None),
        Err(EvalError::EnvMismatch { .. })
    ));
}

#[test]
fn limb_sweep_starts_at_the_unperturbed_reward_and_covers_amputation() {
    let spec = EnvSpec::hopper2d();
    let policy = small_policy(&spec, 10);
    let fractions = [0.0, 0.5, 1.0];
    let sweep = limb_sweep(&policy, &spec, 0, &fractions, 42).unwrap();
    assert_eq!(sweep.limb, "limb");
    assert_eq!(sweep.points.len(), 3);
    assert!(sweep.points.iter().all(|(_, r)| r.is_finite()), "amputation must not crash the simulator");

    // fraction 0 must equal a plain unperturbed episode bit-for-bit
    let nominal = MorphologyContext::nominal(PERTURBATION_DIM);
    let reset_seed = dmap_core::rng::Rng::stream(42, "limb-sweep", &[0]).next_u64();
    let plain = rollout::run_episode(&policy, &spec, &nominal, reset_seed, false).unwrap();
    assert_eq!(sweep.points[0].1.to_bits(), plain.reward.to_bits());

    assert!(sweep.spearman_rho.is_finite());
    assert!(matches!(
        limb_sweep(&policy, &spec, 99, &fractions, 42),
        Err(EvalError::Env(dmap_core::envs::EnvError::UnknownLimb(99)))
    ));
}

#[test]
fn adaptation_curves_have_episode_length_and_respect_the_window() {
    let spec = EnvSpec::hopper2d();
    let policy = small_policy(&spec, 11);
    let ts = TestSet::generate(&spec, 0.1, 4, 5);
    let w30 = adaptation_speed(&policy, &spec, &ts, 30).unwrap();
    let w1 = adaptation_speed(&policy, &spec, &ts, 1).unwrap();
    assert_eq!(w30.curve.len(), w1.curve.len(), "curve spans the longest episode");
    assert!(w30.curve[0].1 == 4, "all episodes alive at the start");
    // with window 1 the first smoothed value is the raw first speed;
    // with any window the first value uses the partial (length-1) window,
    // so both must agree at t = 0
    assert!((w30.curve[0].0 - w1.curve[0].0).abs() < 1e-15);
}
