//! Deterministic single-episode rollouts for the evaluation harness.

use crate::analysis::RolloutLog;
use crate::envs::{Env, EnvSpec, MorphologyContext};
use crate::policies::{ObsBundle, Policy, PolicyKind, TransitionHistory};
use crate::sac::SacError;

/// Outcome of one evaluated episode.
pub struct EpisodeResult {
    pub reward: f64,
    pub steps: u32,
    /// Planar center-of-mass speed per step.
    pub speeds: Vec<f64>,
    pub log: Option<RolloutLog>,
}

/// Run one episode with deterministic (tanh-mean) actions. The harness
/// records rewards and optional per-step logs; the policy itself never
/// observes either.
pub fn run_episode(
    policy: &Policy,
    spec: &EnvSpec,
    context: &MorphologyContext,
    reset_seed: u64,
    with_log: bool,
) -> Result<EpisodeResult, SacError> {
    run_episode_with_body(policy, spec, context, None, reset_seed, with_log)
}

/// As [`run_episode`], optionally forcing explicit link geometry (limb
/// sweeps perturb a single limb outside the morphology-vector scheme).
pub fn run_episode_with_body(
    policy: &Policy,
    spec: &EnvSpec,
    context: &MorphologyContext,
    body: Option<crate::envs::BodyParams>,
    reset_seed: u64,
    with_log: bool,
) -> Result<EpisodeResult, SacError> {
    let mut env = match body {
        Some(b) => Env::reset_with_body(spec, context, b, reset_seed)?,
        None => Env::reset(spec, context, reset_seed)?,
    };
    let with_history = matches!(policy.kind(), PolicyKind::Tcn | PolicyKind::Dmap);
    let mut history = TransitionHistory::new(spec.n_s, spec.n_a, policy.config.history_len);
    let mut obs = env.observation();
    let mut reward = 0.0;
    let mut speeds = Vec::new();
    let mut log = with_log.then(|| RolloutLog {
        observations: Vec::new(),
        actions: Vec::new(),
        attention: (policy.kind() == PolicyKind::Dmap).then(Vec::new),
        context: context.components().to_vec(),
        dt: spec.dt,
    });

    loop {
        let bundle = ObsBundle {
            state: &obs,
            context: (policy.kind() == PolicyKind::Oracle).then(|| context.components()),
            history: with_history.then_some(&history),
        };
        let out = policy.act(&bundle, true, None)?;
        if let Some(log) = log.as_mut() {
            log.observations.push(obs.clone());
            log.actions.push(out.action.clone());
            if let (Some(att), Some(recs)) = (out.attention, log.attention.as_mut()) {
                // the attention matrix must stay column-stochastic at every
                // logged timestep
                let (rows, cols) = (att.k.shape()[0], att.k.shape()[1]);
                for j in 0..cols {
                    let sum: f64 = (0..rows).map(|i| att.k.at2(i, j)).sum();
                    assert!((sum - 1.0).abs() < 1e-9, "K column {j} sums to {sum}");
                }
                recs.push(att);
            }
        }
        let result = env.step(&out.action)?;
        if with_history {
            history.push(&obs, &out.action);
        }
        reward += result.reward;
        // planar speed: the out-of-plane component is identically zero
        speeds.push(result.info.com_velocity.x.abs());
        obs = result.observation;
        if result.done {
            break;
        }
    }
    Ok(EpisodeResult { reward, steps: env.steps(), speeds, log })
}
