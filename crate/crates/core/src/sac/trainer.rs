//! The SAC update rule and the training loop.

use std::io::Write;
use std::path::Path;

use super::replay::{ReplayBuffer, SampledBatch};
use super::{SacError, TrainConfig, TwinCritic};
use crate::envs::{episode_morphology, Env, EnvSpec};
use crate::io::checkpoint::save_checkpoint;
use crate::policies::{ActorInputs, ObsBundle, Policy, PolicyKind, TransitionHistory};
use crate::rng::Rng;
use crate::tensor::{soft_update, squashed_gaussian, AdamHyper, ParamId, ParamStore, Tape, Tensor};

/// Losses and temperature after one gradient step.
#[derive(Clone, Copy, Debug)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// Actor, twin critics, their targets and the entropy temperature.
pub struct Sac {
    pub actor: Policy,
    pub critic: TwinCritic,
    pub target: TwinCritic,
    pub config: TrainConfig,
    log_alpha: ParamStore,
    log_alpha_id: ParamId,
    target_entropy: f64,
    actor_hyper: AdamHyper,
    critic_hyper: AdamHyper,
    alpha_hyper: AdamHyper,
    pub updates_done: u64,
}

/// Published critic widths: the Simple agent keeps the plain `[256, 256]`
/// Q network; every context-fed critic uses `[128, 128]`.
pub fn default_critic_hiddens(kind: PolicyKind) -> Vec<usize> {
    match kind {
        PolicyKind::Simple => vec![256, 256],
        _ => vec![128, 128],
    }
}

impl Sac {
    pub fn new(actor: Policy, critic_hiddens: &[usize], config: TrainConfig) -> Result<Sac, SacError> {
        config.validate()?;
        let n_s = actor.config.n_s;
        let n_a = actor.config.n_a;
        // every critic except Simple's is fed the raw perturbation vector
        let context_dim = match actor.kind() {
            PolicyKind::Simple => None,
            _ => Some(actor.config.context_dim),
        };
        let critic = TwinCritic::new(n_s, n_a, context_dim, critic_hiddens, config.seed ^ 0x5ac);
        let target = critic.target_copy();
        let mut log_alpha = ParamStore::new();
        let log_alpha_id = log_alpha
            .insert("log_alpha", Tensor::scalar(config.init_alpha.ln()))
            .expect("fresh store");
        let target_entropy = config.target_entropy.unwrap_or(-(n_a as f64));
        Ok(Sac {
            actor_hyper: AdamHyper::with_lr(config.actor_lr),
            critic_hyper: AdamHyper::with_lr(config.critic_lr),
            alpha_hyper: AdamHyper::with_lr(config.alpha_lr),
            actor,
            critic,
            target,
            config,
            log_alpha,
            log_alpha_id,
            target_entropy,
            updates_done: 0,
        })
    }

    pub fn for_env(kind: PolicyKind, spec: &EnvSpec, config: TrainConfig) -> Result<Sac, SacError> {
        let actor = Policy::for_env(kind, spec, config.seed)?;
        let hiddens = default_critic_hiddens(kind);
        Sac::new(actor, &hiddens, config)
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value(self.log_alpha_id).item().exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    fn gaussian_noise(rng: &mut Rng, batch: usize, n: usize) -> Tensor {
        Tensor::new(vec![batch, n], (0..batch * n).map(|_| rng.normal()).collect()).expect("noise shape")
    }

    /// Bellman targets `y = r + gamma (1 - done) (min Q'(s', a') - alpha log pi(a'|s'))`
    /// with `a'` drawn fresh from the current actor.
    pub fn critic_target(&self, batch: &PackedBatch, rng: &mut Rng) -> Result<Vec<f64>, SacError> {
        let b = batch.len;
        let mut tape = Tape::new();
        let state = tape.constant(batch.next_states.clone());
        let context = batch.contexts.as_ref().map(|c| tape.constant(c.clone()));
        let history = batch.next_histories.as_ref().map(|h| tape.constant(h.clone()));
        let prev_action = batch.next_prev_actions.as_ref().map(|p| tape.constant(p.clone()));
        let out = self.actor.forward(&mut tape, &ActorInputs { state, context, history, prev_action }, false)?;
        let noise = Self::gaussian_noise(rng, b, self.actor.config.n_a);
        let (a_next, log_pi) = squashed_gaussian(&mut tape, out.mean, out.log_std, Some(&noise), false);
        let critic_ctx = self.critic.uses_context().then(|| {
            let c = batch.contexts.as_ref().expect("context-fed critic needs contexts");
            tape.constant(c.clone())
        });
        let (q1, q2) = self.target.forward(&mut tape, state, critic_ctx, a_next, false);
        let qmin = tape.min_elem(q1, q2);

        let alpha = self.alpha();
        let qmin_v = tape.value(qmin).data();
        let log_pi_v = tape.value(log_pi).data();
        let mut y = Vec::with_capacity(b);
        for i in 0..b {
            let bootstrap = qmin_v[i] - alpha * log_pi_v[i];
            y.push(batch.rewards[i] + self.config.gamma * (1.0 - batch.dones[i]) * bootstrap);
        }
        Ok(y)
    }

    /// One gradient step on the critics, the actor and the temperature,
    /// followed by the Polyak target update. Returns the sampled slots'
    /// TD errors through `replay` priority updates.
    pub fn update(&mut self, replay: &mut ReplayBuffer, step: u64, rng: &mut Rng) -> Result<UpdateStats, SacError> {
        let with_history = matches!(self.actor.kind(), PolicyKind::Tcn | PolicyKind::Dmap);
        let beta = self.config.per_beta(step);
        let sampled = replay.sample(self.config.batch_size, beta, with_history, rng);
        let batch = PackedBatch::new(&sampled, &self.actor)?;
        let y = self.critic_target(&batch, rng)?;

        // ---- critic step ----
        let mut tape = Tape::new();
        let obs = tape.constant(batch.states.clone());
        let act = tape.constant(batch.actions.clone());
        let critic_ctx = self.critic.uses_context().then(|| {
            tape.constant(batch.contexts.clone().expect("context-fed critic needs contexts"))
        });
        let (q1, q2) = self.critic.forward(&mut tape, obs, critic_ctx, act, true);
        let y_node = tape.constant(Tensor::new(vec![batch.len, 1], y.clone())?);
        let w_node = tape.constant(Tensor::new(vec![batch.len, 1], sampled.weights.clone())?);
        let d1 = tape.sub(q1, y_node);
        let d2 = tape.sub(q2, y_node);
        let d1_sq = tape.mul(d1, d1);
        let d2_sq = tape.mul(d2, d2);
        let l1w = tape.mul(w_node, d1_sq);
        let l2w = tape.mul(w_node, d2_sq);
        let l1 = tape.mean_all(l1w);
        let l2 = tape.mean_all(l2w);
        let critic_loss_node = tape.add(l1, l2);
        let critic_loss = tape.value(critic_loss_node).item();
        if !critic_loss.is_finite() {
            return Err(SacError::NanLoss { step, detail: format!("critic loss {critic_loss}") });
        }
        // mean absolute TD error of the two heads drives the priorities
        let td: Vec<f64> = {
            let d1v = tape.value(d1).data();
            let d2v = tape.value(d2).data();
            (0..batch.len).map(|i| 0.5 * (d1v[i].abs() + d2v[i].abs())).collect()
        };
        let grads = tape.backward(critic_loss_node);
        self.critic.store.clear_grads();
        tape.accumulate_param_grads(&grads, &mut self.critic.store);
        self.critic.store.adam_step(&self.critic_hyper)?;
        replay.update_priorities(&sampled.slots, &td);

        // ---- actor step (critics frozen) ----
        let mut tape = Tape::new();
        let obs = tape.constant(batch.states.clone());
        let actor_ctx = batch.contexts.as_ref().map(|c| tape.constant(c.clone()));
        let history = batch.histories.as_ref().map(|h| tape.constant(h.clone()));
        let prev_action = batch.prev_actions.as_ref().map(|p| tape.constant(p.clone()));
        let actor_context = match self.actor.kind() {
            PolicyKind::Oracle => actor_ctx,
            _ => None,
        };
        let out = self.actor.forward(
            &mut tape,
            &ActorInputs { state: obs, context: actor_context, history, prev_action },
            true,
        )?;
        let noise = Self::gaussian_noise(rng, batch.len, self.actor.config.n_a);
        let (a_new, log_pi) = squashed_gaussian(&mut tape, out.mean, out.log_std, Some(&noise), false);
        let critic_ctx = self.critic.uses_context().then(|| {
            tape.constant(batch.contexts.clone().expect("context-fed critic needs contexts"))
        });
        let (q1, q2) = self.critic.forward(&mut tape, obs, critic_ctx, a_new, false);
        let qmin = tape.min_elem(q1, q2);
        let qmin_flat = tape.reshape(qmin, vec![batch.len]);
        let alpha = self.alpha();
        let entropy_term = tape.scale(log_pi, alpha);
        let objective = tape.sub(entropy_term, qmin_flat);
        let actor_loss_node = tape.mean_all(objective);
        let actor_loss = tape.value(actor_loss_node).item();
        if !actor_loss.is_finite() {
            return Err(SacError::NanLoss { step, detail: format!("actor loss {actor_loss}") });
        }
        let mean_log_pi = tape.value(log_pi).data().iter().sum::<f64>() / batch.len as f64;
        let grads = tape.backward(actor_loss_node);
        self.actor.store.clear_grads();
        tape.accumulate_param_grads(&grads, &mut self.actor.store);
        self.actor.store.adam_step(&self.actor_hyper)?;

        // ---- temperature step on log alpha ----
        // J(alpha) = -log_alpha * (mean log pi + target entropy); the
        // gradient is analytic, no tape needed
        let g = -(mean_log_pi + self.target_entropy);
        self.log_alpha.clear_grads();
        self.log_alpha.accumulate_grad(self.log_alpha_id, &[g]);
        self.log_alpha.adam_step(&self.alpha_hyper)?;

        soft_update(&mut self.target.store, &self.critic.store, self.config.tau)?;
        self.updates_done += 1;
        Ok(UpdateStats { critic_loss, actor_loss, alpha: self.alpha() })
    }
}

/// Minibatch fields packed into batched tensors.
pub struct PackedBatch {
    pub len: usize,
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub dones: Vec<f64>,
    pub next_states: Tensor,
    pub contexts: Option<Tensor>,
    pub histories: Option<Tensor>,
    pub prev_actions: Option<Tensor>,
    pub next_histories: Option<Tensor>,
    pub next_prev_actions: Option<Tensor>,
}

impl PackedBatch {
    pub fn new(sampled: &SampledBatch, actor: &Policy) -> Result<PackedBatch, SacError> {
        let b = sampled.transitions.len();
        let n_s = actor.config.n_s;
        let n_a = actor.config.n_a;
        let p = actor.config.context_dim;
        let mut states = Vec::with_capacity(b * n_s);
        let mut actions = Vec::with_capacity(b * n_a);
        let mut next_states = Vec::with_capacity(b * n_s);
        let mut contexts = Vec::with_capacity(b * p);
        let mut rewards = Vec::with_capacity(b);
        let mut dones = Vec::with_capacity(b);
        for tr in &sampled.transitions {
            states.extend_from_slice(&tr.state);
            actions.extend_from_slice(&tr.action);
            next_states.extend_from_slice(&tr.next_state);
            contexts.extend_from_slice(&tr.context);
            rewards.push(tr.reward);
            dones.push(tr.done as u8 as f64);
        }
        let with_history = matches!(actor.kind(), PolicyKind::Tcn | PolicyKind::Dmap);
        let (histories, prev_actions, next_histories, next_prev_actions) = if with_history {
            let c = actor.config.channels();
            let t = actor.config.history_len;
            let mut h = Vec::with_capacity(b * c * t);
            let mut hp = Vec::with_capacity(b * n_a);
            let mut nh = Vec::with_capacity(b * c * t);
            let mut nhp = Vec::with_capacity(b * n_a);
            for tr in &sampled.transitions {
                let hist = tr.history.as_ref().expect("sampled with history");
                let next_hist = tr.next_history.as_ref().expect("sampled with history");
                h.extend_from_slice(hist.data());
                nh.extend_from_slice(next_hist.data());
                // previous action = last column of the action rows
                for row in 0..n_a {
                    hp.push(hist.data()[(n_s + row) * t + (t - 1)]);
                }
                for row in 0..n_a {
                    nhp.push(next_hist.data()[(n_s + row) * t + (t - 1)]);
                }
            }
            (
                Some(Tensor::new(vec![b, c, t], h)?),
                Some(Tensor::new(vec![b, n_a], hp)?),
                Some(Tensor::new(vec![b, c, t], nh)?),
                Some(Tensor::new(vec![b, n_a], nhp)?),
            )
        } else {
            (None, None, None, None)
        };
        Ok(PackedBatch {
            len: b,
            states: Tensor::new(vec![b, n_s], states)?,
            actions: Tensor::new(vec![b, n_a], actions)?,
            rewards,
            dones,
            next_states: Tensor::new(vec![b, n_s], next_states)?,
            contexts: Some(Tensor::new(vec![b, p], contexts)?),
            histories,
            prev_actions,
            next_histories,
            next_prev_actions,
        })
    }
}

/// Output sinks for [`train`].
#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Per-episode metrics CSV stream.
    pub metrics: Option<&'a mut dyn Write>,
    /// Periodic and final checkpoints land here.
    pub checkpoint_dir: Option<&'a Path>,
}

pub const METRICS_HEADER: &str = "step,episode,episode_reward,critic_loss,actor_loss,alpha,buffer_size";

/// Train a SAC agent: one episode per freshly sampled morphology, uniform
/// random actions during warmup, one update per `update_every` environment
/// steps afterwards. Fully deterministic for a fixed seed.
pub fn train(spec: &EnvSpec, mut sac: Sac, hooks: &mut TrainHooks) -> Result<Sac, SacError> {
    let config = sac.config.clone();
    let mut replay = ReplayBuffer::new(
        config.buffer_capacity,
        spec.n_s,
        spec.n_a,
        sac.actor.config.history_len,
        config.prioritized.then(|| config.per),
    );
    let mut explore_rng = Rng::stream(config.seed, "sac-explore", &[]);
    let mut warmup_rng = Rng::stream(config.seed, "sac-warmup", &[]);
    let mut update_rng = Rng::stream(config.seed, "sac-update", &[]);

    if let Some(w) = hooks.metrics.as_deref_mut() {
        writeln!(w, "{METRICS_HEADER}")?;
    }

    let with_history = matches!(sac.actor.kind(), PolicyKind::Tcn | PolicyKind::Dmap);
    let mut history = TransitionHistory::new(spec.n_s, spec.n_a, sac.actor.config.history_len);

    let mut episode: u64 = 0;
    let mut step: u64 = 0;
    'training: while step < config.total_steps {
        let context = episode_morphology(config.sigma_train, spec.perturbation_dim, config.seed, episode);
        let reset_seed = Rng::stream(config.seed, "sac-episode-seed", &[episode]).next_u64();
        let mut env = Env::reset(spec, &context, reset_seed)?;
        history.clear();
        let mut obs = env.observation();
        let mut episode_reward = 0.0;
        let mut loss_acc = (0.0f64, 0.0f64, 0u64);

        loop {
            let action = if step < config.warmup_steps {
                (0..spec.n_a).map(|_| warmup_rng.uniform_range(-1.0, 1.0)).collect::<Vec<f64>>()
            } else {
                let bundle = ObsBundle {
                    state: &obs,
                    context: (sac.actor.kind() == PolicyKind::Oracle).then(|| context.components()),
                    history: with_history.then_some(&history),
                };
                sac.actor.act(&bundle, false, Some(&mut explore_rng))?.action
            };

            let result = env.step(&action)?;
            replay.push(&obs, &action, result.reward, &result.observation, result.done, context.components(), episode);
            if with_history {
                history.push(&obs, &action);
            }
            episode_reward += result.reward;
            obs = result.observation;
            step += 1;

            if step > config.warmup_steps && replay.len() >= config.batch_size && step % config.update_every == 0 {
                let stats = sac.update(&mut replay, step, &mut update_rng)?;
                loss_acc.0 += stats.critic_loss;
                loss_acc.1 += stats.actor_loss;
                loss_acc.2 += 1;
            }

            if let (Some(dir), Some(every)) = (hooks.checkpoint_dir, config.checkpoint_every) {
                if step % every == 0 {
                    std::fs::create_dir_all(dir)?;
                    save_checkpoint(&sac.actor, &dir.join(format!("ckpt_{step:09}.bin")))
                        .map_err(|e| SacError::Config(format!("checkpoint write failed: {e}")))?;
                }
            }

            let episode_over = result.done;
            if episode_over || step >= config.total_steps {
                if let Some(w) = hooks.metrics.as_deref_mut() {
                    let (cl, al) = if loss_acc.2 > 0 {
                        (format!("{}", loss_acc.0 / loss_acc.2 as f64), format!("{}", loss_acc.1 / loss_acc.2 as f64))
                    } else {
                        (String::new(), String::new())
                    };
                    writeln!(
                        w,
                        "{step},{episode},{episode_reward},{cl},{al},{},{}",
                        sac.alpha(),
                        replay.len()
                    )?;
                }
                episode += 1;
                if step >= config.total_steps {
                    break 'training;
                }
                break;
            }
        }
    }

    if let Some(dir) = hooks.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(&sac.actor, &dir.join("final.bin"))
            .map_err(|e| SacError::Config(format!("checkpoint write failed: {e}")))?;
    }
    Ok(sac)
}

/// Mean episode reward of the deterministic policy over `episodes` fresh
/// morphologies (training-time progress probe).
pub fn deterministic_eval(
    spec: &EnvSpec,
    policy: &Policy,
    sigma: f64,
    episodes: usize,
    seed: u64,
) -> Result<f64, SacError> {
    let with_history = matches!(policy.kind(), PolicyKind::Tcn | PolicyKind::Dmap);
    let mut total = 0.0;
    for ep in 0..episodes {
        let context = episode_morphology(sigma, spec.perturbation_dim, seed, ep as u64);
        let reset_seed = Rng::stream(seed, "det-eval-reset", &[ep as u64]).next_u64();
        let mut env = Env::reset(spec, &context, reset_seed)?;
        let mut history = TransitionHistory::new(spec.n_s, spec.n_a, policy.config.history_len);
        let mut obs = env.observation();
        loop {
            let bundle = ObsBundle {
                state: &obs,
                context: (policy.kind() == PolicyKind::Oracle).then(|| context.components()),
                history: with_history.then_some(&history),
            };
            let action = policy.act(&bundle, true, None)?.action;
            let r = env.step(&action)?;
            if with_history {
                history.push(&obs, &action);
            }
            total += r.reward;
            obs = r.observation;
            if r.done {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}
