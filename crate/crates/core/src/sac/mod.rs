//! Soft actor-critic with twin critics, target networks and automatic
//! entropy temperature.
//!
//! The critics are trained on `(observation, context, action)` — the raw
//! perturbation vector is appended for every agent except Simple, whose
//! critic sees `(observation, action)` only. Context stays a training-time
//! aid; the actor never receives it unless it is the Oracle.

pub mod replay;
mod trainer;

pub use replay::{PerConfig, ReplayBuffer, SampledBatch, Transition};
pub use trainer::{default_critic_hiddens, deterministic_eval, train, PackedBatch, Sac, TrainHooks, UpdateStats, METRICS_HEADER};

use crate::envs::EnvError;
use crate::policies::nets::{Linear, ReluStack};
use crate::policies::PolicyError;
use crate::rng::Rng;
use crate::tensor::{NodeId, ParamStore, Tape, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum SacError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss at step {step}: {detail}")]
    NanLoss { step: u64, detail: String },
    #[error("training configuration error: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Training hyperparameters. Defaults follow the published table where it
/// speaks (discount 0.995, batch 256, learning rates 3e-4, buffer 300k,
/// prioritized replay on) and conventional SAC values where it is silent
/// (tau 0.005, warmup 5000, one update per environment step, target entropy
/// equal to the negative action dimension).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub sigma_train: f64,
    pub seed: u64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    /// Defaults to `-n_a` when `None`.
    pub target_entropy: Option<f64>,
    pub warmup_steps: u64,
    pub update_every: u64,
    pub buffer_capacity: usize,
    pub prioritized: bool,
    pub per: PerConfig,
    pub init_alpha: f64,
    /// Write a checkpoint every this many environment steps.
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 100_000,
            sigma_train: 0.0,
            seed: 0,
            gamma: 0.995,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            batch_size: 256,
            tau: 0.005,
            target_entropy: None,
            warmup_steps: 5_000,
            update_every: 1,
            buffer_capacity: 300_000,
            prioritized: true,
            per: PerConfig::default(),
            init_alpha: 1.0,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SacError::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(SacError::Config("batch and buffer must be positive".into()));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(SacError::Config("batch larger than buffer capacity".into()));
        }
        if self.update_every == 0 {
            return Err(SacError::Config("update_every must be positive".into()));
        }
        Ok(())
    }

    /// Anneal the importance exponent linearly over training.
    pub fn per_beta(&self, step: u64) -> f64 {
        let f = (step as f64 / self.total_steps.max(1) as f64).clamp(0.0, 1.0);
        self.per.beta_start + (self.per.beta_end - self.per.beta_start) * f
    }
}

/// Twin Q networks in one parameter store (`q1/...`, `q2/...`), each an MLP
/// over `(observation, [context,] action)`.
pub struct TwinCritic {
    pub store: ParamStore,
    q1: (ReluStack, Linear),
    q2: (ReluStack, Linear),
    n_s: usize,
    n_a: usize,
    /// `Some(p)` when the critic is fed the raw perturbation vector.
    context_dim: Option<usize>,
}

impl TwinCritic {
    pub fn new(n_s: usize, n_a: usize, context_dim: Option<usize>, hiddens: &[usize], seed: u64) -> Self {
        let in_dim = n_s + context_dim.unwrap_or(0) + n_a;
        let mut store = ParamStore::new();
        let mut rng = Rng::stream(seed, "critic-init", &[]);
        let build = |store: &mut ParamStore, name: &str, rng: &mut Rng| {
            let net = ReluStack::init(store, name, in_dim, hiddens, rng);
            let last = net.out_dim(in_dim);
            let out = Linear::init(store, &format!("{name}_out"), last, 1, rng);
            (net, out)
        };
        let q1 = build(&mut store, "q1", &mut rng);
        let q2 = build(&mut store, "q2", &mut rng);
        TwinCritic { store, q1, q2, n_s, n_a, context_dim }
    }

    /// Target copy sharing the same architecture handles.
    pub fn target_copy(&self) -> TwinCritic {
        TwinCritic {
            store: self.store.clone(),
            q1: self.q1.clone(),
            q2: self.q2.clone(),
            n_s: self.n_s,
            n_a: self.n_a,
            context_dim: self.context_dim,
        }
    }

    pub fn uses_context(&self) -> bool {
        self.context_dim.is_some()
    }

    /// Q values of both heads: `([b, 1], [b, 1])`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        obs: NodeId,
        context: Option<NodeId>,
        action: NodeId,
        trainable: bool,
    ) -> (NodeId, NodeId) {
        self.forward_in(tape, &self.store, obs, context, action, trainable)
    }

    /// As [`TwinCritic::forward`] against an external store clone.
    pub fn forward_in(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        obs: NodeId,
        context: Option<NodeId>,
        action: NodeId,
        trainable: bool,
    ) -> (NodeId, NodeId) {
        debug_assert_eq!(tape.shape(obs)[1], self.n_s);
        debug_assert_eq!(tape.shape(action)[1], self.n_a);
        debug_assert_eq!(context.is_some(), self.context_dim.is_some(), "critic context routing");
        let input = match context {
            Some(c) => tape.concat_cols(&[obs, c, action]),
            None => tape.concat_cols(&[obs, action]),
        };
        let h1 = self.q1.0.forward(tape, store, input, trainable);
        let v1 = self.q1.1.forward(tape, store, h1, trainable);
        let h2 = self.q2.0.forward(tape, store, input, trainable);
        let v2 = self.q2.1.forward(tape, store, h2, trainable);
        (v1, v2)
    }
}
