//! The five actor architectures behind one action-selection interface.
//!
//! | kind   | encoder                  | policy              | inputs          |
//! |--------|--------------------------|---------------------|-----------------|
//! | simple | —                        | MLP [256,256]       | state           |
//! | oracle | MLP [256,128] -> 4       | MLP [128,128]       | state + context |
//! | tcn    | TCN + MLP [128,32] -> 4  | MLP [128,128]       | state + history |
//! | dmap   | per-channel TCN + attention | per-joint MLP [32,32] | state + history |
//!
//! RMA is a `tcn`-kind policy whose encoder was distilled from a trained
//! oracle (see the `distill` module); DMAP-ne is `dmap` evaluated with the
//! morphology encoding zeroed (`ablate_encoding`).
//!
//! The DMAP encoder processes every history channel independently through a
//! shared temporal convolution, maps each channel feature to an attention
//! column `k_i` (over joints) and a value vector `v_i`, stacks them into
//! `Ktilde` and `V`, normalizes `K = softmax_columns(Ktilde)` and forms the
//! per-joint encodings `E = K^T V` — each row of `E` is a convex combination
//! of the value rows. Joint `i`'s controller is an independent MLP over
//! `(state, previous action, e_i)` emitting a scalar mean and log-std.

mod history;
pub mod nets;

pub use history::TransitionHistory;

use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;
use crate::rng::Rng;
use crate::tensor::{squashed_gaussian, NodeId, ParamStore, Tape, Tensor, TensorError};
use nets::{Linear, ReluStack, Tcn};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy configuration error: {0}")]
    Config(String),
    #[error("checkpoint is missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has unexpected shape: {detail}")]
    ParamShape { name: String, detail: String },
    #[error("{kind} policy requires `{field}` in the observation bundle")]
    MissingBundleField { kind: PolicyKind, field: &'static str },
    #[error("{kind} policy must not receive `{field}` (input columns are fixed per architecture)")]
    UnexpectedBundleField { kind: PolicyKind, field: &'static str },
    #[error("{what} width mismatch: expected {want}, got {got}")]
    WidthMismatch { what: &'static str, want: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Simple,
    Oracle,
    Tcn,
    Dmap,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PolicyKind::Simple => "simple",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Tcn => "tcn",
            PolicyKind::Dmap => "dmap",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(PolicyKind::Simple),
            "oracle" => Ok(PolicyKind::Oracle),
            "tcn" => Ok(PolicyKind::Tcn),
            "dmap" => Ok(PolicyKind::Dmap),
            other => Err(PolicyError::Config(format!("unknown policy kind `{other}`"))),
        }
    }
}

/// Architecture hyperparameters. `for_env` fills in the published defaults;
/// tests shrink them for cheap gradient checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub n_s: usize,
    pub n_a: usize,
    /// Perturbation-vector width (oracle encoder input).
    pub context_dim: usize,
    /// Morphology encoding size.
    pub n_v: usize,
    /// Transition-history window T.
    pub history_len: usize,
    pub simple_hiddens: Vec<usize>,
    pub oracle_encoder_hiddens: Vec<usize>,
    pub trunk_hiddens: Vec<usize>,
    pub tcn_filters: Vec<usize>,
    pub tcn_kernels: Vec<usize>,
    pub tcn_strides: Vec<usize>,
    pub encoder_mlp_hiddens: Vec<usize>,
    pub controller_hiddens: Vec<usize>,
    /// DMAP-ne: replace every joint's encoding with zeros at act time.
    pub ablate_encoding: bool,
}

impl PolicyConfig {
    pub fn for_env(kind: PolicyKind, spec: &EnvSpec) -> Self {
        PolicyConfig {
            kind,
            n_s: spec.n_s,
            n_a: spec.n_a,
            context_dim: spec.perturbation_dim,
            n_v: 4,
            history_len: 30,
            simple_hiddens: vec![256, 256],
            oracle_encoder_hiddens: vec![256, 128],
            trunk_hiddens: vec![128, 128],
            tcn_filters: vec![32, 32, 32],
            tcn_kernels: vec![5, 3, 3],
            tcn_strides: vec![4, 1, 1],
            encoder_mlp_hiddens: vec![128, 32],
            controller_hiddens: vec![32, 32],
            ablate_encoding: false,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let all_sizes = self
            .simple_hiddens
            .iter()
            .chain(&self.oracle_encoder_hiddens)
            .chain(&self.trunk_hiddens)
            .chain(&self.tcn_filters)
            .chain(&self.tcn_kernels)
            .chain(&self.tcn_strides)
            .chain(&self.encoder_mlp_hiddens)
            .chain(&self.controller_hiddens);
        for &s in all_sizes {
            if s == 0 {
                return Err(PolicyError::Config("network sizes must be positive".into()));
            }
        }
        if self.n_s == 0 || self.n_a == 0 || self.n_v == 0 || self.history_len == 0 {
            return Err(PolicyError::Config("dimensions must be positive".into()));
        }
        if self.tcn_filters.len() != self.tcn_kernels.len() || self.tcn_kernels.len() != self.tcn_strides.len() {
            return Err(PolicyError::Config("tcn layer lists must have equal length".into()));
        }
        if self.ablate_encoding && self.kind != PolicyKind::Dmap {
            return Err(PolicyError::Config("ablate_encoding only applies to dmap".into()));
        }
        if matches!(self.kind, PolicyKind::Tcn | PolicyKind::Dmap) {
            Tcn::out_len(&self.tcn_kernels, &self.tcn_strides, self.history_len)?;
        }
        Ok(())
    }

    /// History channel count `n_s + n_a`.
    pub fn channels(&self) -> usize {
        self.n_s + self.n_a
    }

    /// Flattened feature width after the convolution stack.
    pub fn tcn_feature_dim(&self) -> Result<usize, PolicyError> {
        let l = Tcn::out_len(&self.tcn_kernels, &self.tcn_strides, self.history_len)?;
        Ok(self.tcn_filters.last().copied().unwrap_or(0) * l)
    }
}

struct Controller {
    trunk: ReluStack,
    mean: Linear,
    log_std: Linear,
}

enum Arch {
    Simple {
        trunk: ReluStack,
        mean: Linear,
        log_std: Linear,
    },
    Oracle {
        enc: ReluStack,
        enc_out: Linear,
        trunk: ReluStack,
        mean: Linear,
        log_std: Linear,
    },
    Tcn {
        tcn: Tcn,
        enc_mlp: ReluStack,
        enc_out: Linear,
        trunk: ReluStack,
        mean: Linear,
        log_std: Linear,
    },
    Dmap {
        tcn: Tcn,
        feat: ReluStack,
        k_head: Linear,
        v_head: Linear,
        controllers: Vec<Controller>,
    },
}

/// Attention matrices recorded during one DMAP forward pass.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    /// Pre-softmax scores, `(n_s + n_a) x n_a`.
    pub k_tilde: Tensor,
    /// Column-stochastic attention, same shape.
    pub k: Tensor,
    /// Value encodings, `(n_s + n_a) x n_v`.
    pub v: Tensor,
    /// Per-joint encodings `K^T V`, `n_a x n_v`.
    pub e: Tensor,
}

/// Tape nodes of the attention matrices (batched forward).
#[derive(Clone, Copy, Debug)]
pub struct AttentionNodes {
    pub k_tilde: NodeId,
    pub k: NodeId,
    pub v: NodeId,
    pub e: NodeId,
}

/// Batched actor inputs already on the tape.
pub struct ActorInputs {
    /// `[batch, n_s]`
    pub state: NodeId,
    /// `[batch, context_dim]`, oracle only
    pub context: Option<NodeId>,
    /// `[batch, channels, history_len]`, tcn/dmap only
    pub history: Option<NodeId>,
    /// `[batch, n_a]`, dmap only
    pub prev_action: Option<NodeId>,
}

pub struct ActorOutput {
    /// `[batch, n_a]`
    pub mean: NodeId,
    /// `[batch, n_a]`
    pub log_std: NodeId,
    pub attention: Option<AttentionNodes>,
}

/// Everything the caller must supply for one [`Policy::act`]. The previous
/// action needed by DMAP is taken from the history's last column.
pub struct ObsBundle<'a> {
    pub state: &'a [f64],
    pub context: Option<&'a [f64]>,
    pub history: Option<&'a TransitionHistory>,
}

pub struct ActOutput {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub attention: Option<AttentionRecord>,
}

pub struct Policy {
    pub config: PolicyConfig,
    pub env_name: String,
    pub store: ParamStore,
    arch: Arch,
}

impl Policy {
    /// Fresh policy with seeded initialization.
    pub fn new(config: PolicyConfig, env_name: &str, seed: u64) -> Result<Policy, PolicyError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = Rng::stream(seed, "policy-init", &[]);
        let arch = init_arch(&config, &mut store, &mut rng)?;
        Ok(Policy { config, env_name: env_name.to_string(), store, arch })
    }

    pub fn for_env(kind: PolicyKind, spec: &EnvSpec, seed: u64) -> Result<Policy, PolicyError> {
        Policy::new(PolicyConfig::for_env(kind, spec), spec.name, seed)
    }

    /// Rebind an architecture onto restored parameter values.
    pub fn from_store(config: PolicyConfig, env_name: &str, store: ParamStore) -> Result<Policy, PolicyError> {
        config.validate()?;
        let arch = resolve_arch(&config, &store)?;
        Ok(Policy { config, env_name: env_name.to_string(), store, arch })
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    /// Oracle morphology encoding of a batch of contexts: `[b, p] -> [b, n_v]`.
    pub fn oracle_encode(&self, tape: &mut Tape, context: NodeId, trainable: bool) -> Result<NodeId, PolicyError> {
        self.oracle_encode_in(tape, &self.store, context, trainable)
    }

    /// As [`Policy::oracle_encode`] against an external store clone.
    pub fn oracle_encode_in(&self, tape: &mut Tape, store: &ParamStore, context: NodeId, trainable: bool) -> Result<NodeId, PolicyError> {
        match &self.arch {
            Arch::Oracle { enc, enc_out, .. } => {
                let h = enc.forward(tape, store, context, trainable);
                Ok(enc_out.forward(tape, store, h, trainable))
            }
            _ => Err(PolicyError::Config(format!("oracle_encode on a {} policy", self.kind()))),
        }
    }

    /// TCN context encoding of a batch of histories: `[b, c, t] -> [b, n_v]`.
    pub fn tcn_encode(&self, tape: &mut Tape, history: NodeId, trainable: bool) -> Result<NodeId, PolicyError> {
        self.tcn_encode_in(tape, &self.store, history, trainable)
    }

    /// As [`Policy::tcn_encode`] against an external store clone.
    pub fn tcn_encode_in(&self, tape: &mut Tape, store: &ParamStore, history: NodeId, trainable: bool) -> Result<NodeId, PolicyError> {
        match &self.arch {
            Arch::Tcn { tcn, enc_mlp, enc_out, .. } => {
                tcn_encode_with(tcn, enc_mlp, enc_out, store, tape, history, trainable)
            }
            _ => Err(PolicyError::Config(format!("tcn_encode on a {} policy", self.kind()))),
        }
    }

    /// DMAP attention encoding of a batch of histories.
    pub fn dmap_encode(&self, tape: &mut Tape, history: NodeId, trainable: bool) -> Result<AttentionNodes, PolicyError> {
        self.dmap_encode_in(tape, &self.store, history, trainable)
    }

    /// As [`Policy::dmap_encode`] against an external store clone.
    pub fn dmap_encode_in(&self, tape: &mut Tape, store: &ParamStore, history: NodeId, trainable: bool) -> Result<AttentionNodes, PolicyError> {
        match &self.arch {
            Arch::Dmap { tcn, feat, k_head, v_head, .. } => {
                let sh = tape.shape(history).to_vec();
                if sh.len() != 3 || sh[1] != self.config.channels() || sh[2] != self.config.history_len {
                    return Err(PolicyError::Config(format!(
                        "dmap history must be [b, {}, {}], got {sh:?}",
                        self.config.channels(),
                        self.config.history_len
                    )));
                }
                let (batch, channels, t) = (sh[0], sh[1], sh[2]);
                // every channel through the shared single-channel TCN
                let per_channel = tape.reshape(history, vec![batch * channels, 1, t]);
                let conv = tcn.forward(tape, store, per_channel, trainable)?;
                let feat_dim = self.config.tcn_feature_dim()?;
                let flat = tape.reshape(conv, vec![batch * channels, feat_dim]);
                let hidden = feat.forward(tape, store, flat, trainable);
                let k_flat = k_head.forward(tape, store, hidden, trainable);
                let v_flat = v_head.forward(tape, store, hidden, trainable);
                let k_tilde = tape.reshape(k_flat, vec![batch, channels, self.config.n_a]);
                let v = tape.reshape(v_flat, vec![batch, channels, self.config.n_v]);
                let k = tape.softmax_cols(k_tilde);
                let e = tape.bmm_tn(k, v);
                Ok(AttentionNodes { k_tilde, k, v, e })
            }
            _ => Err(PolicyError::Config(format!("dmap_encode on a {} policy", self.kind()))),
        }
    }

    /// Batched actor forward pass to `(mean, log_std)` heads.
    pub fn forward(&self, tape: &mut Tape, inputs: &ActorInputs, trainable: bool) -> Result<ActorOutput, PolicyError> {
        self.forward_in(tape, &self.store, inputs, trainable)
    }

    /// As [`Policy::forward`] against an external store clone (finite
    /// difference checks perturb a clone coordinate by coordinate).
    pub fn forward_in(&self, tape: &mut Tape, store: &ParamStore, inputs: &ActorInputs, trainable: bool) -> Result<ActorOutput, PolicyError> {
        let batch = {
            let s = tape.shape(inputs.state);
            if s.len() != 2 || s[1] != self.config.n_s {
                return Err(PolicyError::WidthMismatch {
                    what: "state",
                    want: self.config.n_s,
                    got: *s.last().unwrap_or(&0),
                });
            }
            s[0]
        };
        match &self.arch {
            Arch::Simple { trunk, mean, log_std } => {
                let h = trunk.forward(tape, store, inputs.state, trainable);
                Ok(ActorOutput {
                    mean: mean.forward(tape, store, h, trainable),
                    log_std: log_std.forward(tape, store, h, trainable),
                    attention: None,
                })
            }
            Arch::Oracle { trunk, mean, log_std, .. } => {
                let ctx = inputs.context.ok_or(PolicyError::MissingBundleField {
                    kind: PolicyKind::Oracle,
                    field: "context",
                })?;
                let enc = self.oracle_encode_in(tape, store, ctx, trainable)?;
                let joined = tape.concat_cols(&[inputs.state, enc]);
                let h = trunk.forward(tape, store, joined, trainable);
                Ok(ActorOutput {
                    mean: mean.forward(tape, store, h, trainable),
                    log_std: log_std.forward(tape, store, h, trainable),
                    attention: None,
                })
            }
            Arch::Tcn { trunk, mean, log_std, .. } => {
                let hist = inputs.history.ok_or(PolicyError::MissingBundleField {
                    kind: PolicyKind::Tcn,
                    field: "history",
                })?;
                let enc = self.tcn_encode_in(tape, store, hist, trainable)?;
                let joined = tape.concat_cols(&[inputs.state, enc]);
                let h = trunk.forward(tape, store, joined, trainable);
                Ok(ActorOutput {
                    mean: mean.forward(tape, store, h, trainable),
                    log_std: log_std.forward(tape, store, h, trainable),
                    attention: None,
                })
            }
            Arch::Dmap { controllers, .. } => {
                let hist = inputs.history.ok_or(PolicyError::MissingBundleField {
                    kind: PolicyKind::Dmap,
                    field: "history",
                })?;
                let prev = inputs.prev_action.ok_or(PolicyError::MissingBundleField {
                    kind: PolicyKind::Dmap,
                    field: "previous action",
                })?;
                let attention = self.dmap_encode_in(tape, store, hist, trainable)?;
                let zero_enc = if self.config.ablate_encoding {
                    Some(tape.constant(Tensor::zeros(&[batch, self.config.n_v])))
                } else {
                    None
                };
                let mut means = Vec::with_capacity(controllers.len());
                let mut log_stds = Vec::with_capacity(controllers.len());
                for (i, ctrl) in controllers.iter().enumerate() {
                    let e_i = match zero_enc {
                        Some(z) => z,
                        None => tape.select_mid(attention.e, i),
                    };
                    let joined = tape.concat_cols(&[inputs.state, prev, e_i]);
                    let h = ctrl.trunk.forward(tape, store, joined, trainable);
                    means.push(ctrl.mean.forward(tape, store, h, trainable));
                    log_stds.push(ctrl.log_std.forward(tape, store, h, trainable));
                }
                Ok(ActorOutput {
                    mean: tape.concat_cols(&means),
                    log_std: tape.concat_cols(&log_stds),
                    attention: Some(attention),
                })
            }
        }
    }

    /// Select an action for one observation bundle.
    ///
    /// Routing rules: `context` is required by oracle and rejected
    /// everywhere else; `history` is required by tcn/dmap and rejected by
    /// simple/oracle. Stochastic action selection needs an `rng`.
    pub fn act(&self, bundle: &ObsBundle, deterministic: bool, mut rng: Option<&mut Rng>) -> Result<ActOutput, PolicyError> {
        let kind = self.kind();
        if bundle.state.len() != self.config.n_s {
            return Err(PolicyError::WidthMismatch { what: "state", want: self.config.n_s, got: bundle.state.len() });
        }
        match kind {
            PolicyKind::Oracle => {
                let ctx = bundle.context.ok_or(PolicyError::MissingBundleField { kind, field: "context" })?;
                if ctx.len() != self.config.context_dim {
                    return Err(PolicyError::WidthMismatch {
                        what: "context",
                        want: self.config.context_dim,
                        got: ctx.len(),
                    });
                }
            }
            _ => {
                if bundle.context.is_some() {
                    return Err(PolicyError::UnexpectedBundleField { kind, field: "context" });
                }
            }
        }
        match kind {
            PolicyKind::Tcn | PolicyKind::Dmap => {
                let h = bundle.history.ok_or(PolicyError::MissingBundleField { kind, field: "history" })?;
                if h.channels() != self.config.channels() || h.window() != self.config.history_len {
                    return Err(PolicyError::WidthMismatch {
                        what: "history",
                        want: self.config.channels() * self.config.history_len,
                        got: h.channels() * h.window(),
                    });
                }
            }
            _ => {
                if bundle.history.is_some() {
                    return Err(PolicyError::UnexpectedBundleField { kind, field: "history" });
                }
            }
        }
        if !deterministic && rng.is_none() {
            return Err(PolicyError::Config("stochastic action selection needs an rng".into()));
        }

        let mut tape = Tape::new();
        let state = tape.constant(Tensor::new(vec![1, self.config.n_s], bundle.state.to_vec())?);
        let context = match bundle.context {
            Some(c) => Some(tape.constant(Tensor::new(vec![1, c.len()], c.to_vec())?)),
            None => None,
        };
        let (history, prev_action) = match bundle.history {
            Some(h) => {
                let m = h.as_matrix();
                let t = tape.constant(m.reshaped(vec![1, self.config.channels(), self.config.history_len])?);
                let prev = tape.constant(Tensor::new(vec![1, self.config.n_a], h.prev_action())?);
                (Some(t), Some(prev))
            }
            None => (None, None),
        };
        let out = self.forward(&mut tape, &ActorInputs { state, context, history, prev_action }, false)?;

        let noise = if deterministic {
            None
        } else {
            let r = rng.as_deref_mut().expect("checked above");
            let data: Vec<f64> = (0..self.config.n_a).map(|_| r.normal()).collect();
            Some(Tensor::new(vec![1, self.config.n_a], data)?)
        };
        let (action_node, log_prob_node) = squashed_gaussian(&mut tape, out.mean, out.log_std, noise.as_ref(), deterministic);
        let action = tape.value(action_node).data().to_vec();
        let log_prob = tape.value(log_prob_node).data()[0];
        let attention = out.attention.map(|a| self.extract_attention(&tape, a));
        Ok(ActOutput { action, log_prob, attention })
    }

    fn extract_attention(&self, tape: &Tape, nodes: AttentionNodes) -> AttentionRecord {
        let c = self.config.channels();
        let (a, v) = (self.config.n_a, self.config.n_v);
        let to2d = |id: NodeId, rows: usize, cols: usize| {
            tape.value(id).clone().reshaped(vec![rows, cols]).expect("batch of one")
        };
        AttentionRecord {
            k_tilde: to2d(nodes.k_tilde, c, a),
            k: to2d(nodes.k, c, a),
            v: to2d(nodes.v, c, v),
            e: to2d(nodes.e, a, v),
        }
    }
}

fn tcn_encode_with(
    tcn: &Tcn,
    enc_mlp: &ReluStack,
    enc_out: &Linear,
    store: &ParamStore,
    tape: &mut Tape,
    history: NodeId,
    trainable: bool,
) -> Result<NodeId, PolicyError> {
    let sh = tape.shape(history).to_vec();
    if sh.len() != 3 {
        return Err(PolicyError::Config(format!("history must be [b, c, t], got {sh:?}")));
    }
    let batch = sh[0];
    let conv = tcn.forward(tape, store, history, trainable)?;
    let conv_shape = tape.shape(conv).to_vec();
    let flat = tape.reshape(conv, vec![batch, conv_shape[1] * conv_shape[2]]);
    let h = enc_mlp.forward(tape, store, flat, trainable);
    Ok(enc_out.forward(tape, store, h, trainable))
}

fn init_arch(config: &PolicyConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Arch, PolicyError> {
    let feat_dim = match config.kind {
        PolicyKind::Tcn | PolicyKind::Dmap => config.tcn_feature_dim()?,
        _ => 0,
    };
    Ok(match config.kind {
        PolicyKind::Simple => {
            let trunk = ReluStack::init(store, "trunk", config.n_s, &config.simple_hiddens, rng);
            let last = trunk.out_dim(config.n_s);
            Arch::Simple {
                trunk,
                mean: Linear::init(store, "mean", last, config.n_a, rng),
                log_std: Linear::init(store, "log_std", last, config.n_a, rng),
            }
        }
        PolicyKind::Oracle => {
            let enc = ReluStack::init(store, "encoder", config.context_dim, &config.oracle_encoder_hiddens, rng);
            let enc_last = enc.out_dim(config.context_dim);
            let enc_out = Linear::init(store, "encoder_out", enc_last, config.n_v, rng);
            let trunk = ReluStack::init(store, "trunk", config.n_s + config.n_v, &config.trunk_hiddens, rng);
            let last = trunk.out_dim(config.n_s + config.n_v);
            Arch::Oracle {
                enc,
                enc_out,
                trunk,
                mean: Linear::init(store, "mean", last, config.n_a, rng),
                log_std: Linear::init(store, "log_std", last, config.n_a, rng),
            }
        }
        PolicyKind::Tcn => {
            let tcn = Tcn::init(store, "tcn", config.channels(), &config.tcn_filters, &config.tcn_kernels, &config.tcn_strides, rng);
            let enc_mlp = ReluStack::init(store, "enc_mlp", feat_dim, &config.encoder_mlp_hiddens, rng);
            let enc_last = enc_mlp.out_dim(feat_dim);
            let enc_out = Linear::init(store, "encoder_out", enc_last, config.n_v, rng);
            let trunk = ReluStack::init(store, "trunk", config.n_s + config.n_v, &config.trunk_hiddens, rng);
            let last = trunk.out_dim(config.n_s + config.n_v);
            Arch::Tcn {
                tcn,
                enc_mlp,
                enc_out,
                trunk,
                mean: Linear::init(store, "mean", last, config.n_a, rng),
                log_std: Linear::init(store, "log_std", last, config.n_a, rng),
            }
        }
        PolicyKind::Dmap => {
            let tcn = Tcn::init(store, "tcn", 1, &config.tcn_filters, &config.tcn_kernels, &config.tcn_strides, rng);
            let feat = ReluStack::init(store, "feat_mlp", feat_dim, &config.encoder_mlp_hiddens, rng);
            let feat_last = feat.out_dim(feat_dim);
            let k_head = Linear::init(store, "k_head", feat_last, config.n_a, rng);
            let v_head = Linear::init(store, "v_head", feat_last, config.n_v, rng);
            let ctrl_in = config.n_s + config.n_a + config.n_v;
            let controllers = (0..config.n_a)
                .map(|i| {
                    let trunk = ReluStack::init(store, &format!("ctrl/{i}/trunk"), ctrl_in, &config.controller_hiddens, rng);
                    let last = trunk.out_dim(ctrl_in);
                    Controller {
                        trunk,
                        mean: Linear::init(store, &format!("ctrl/{i}/mean"), last, 1, rng),
                        log_std: Linear::init(store, &format!("ctrl/{i}/log_std"), last, 1, rng),
                    }
                })
                .collect();
            Arch::Dmap { tcn, feat, k_head, v_head, controllers }
        }
    })
}

fn resolve_arch(config: &PolicyConfig, store: &ParamStore) -> Result<Arch, PolicyError> {
    let feat_dim = match config.kind {
        PolicyKind::Tcn | PolicyKind::Dmap => config.tcn_feature_dim()?,
        _ => 0,
    };
    Ok(match config.kind {
        PolicyKind::Simple => {
            let trunk = ReluStack::resolve(store, "trunk", config.n_s, &config.simple_hiddens)?;
            let last = trunk.out_dim(config.n_s);
            Arch::Simple {
                trunk,
                mean: Linear::resolve(store, "mean", last, config.n_a)?,
                log_std: Linear::resolve(store, "log_std", last, config.n_a)?,
            }
        }
        PolicyKind::Oracle => {
            let enc = ReluStack::resolve(store, "encoder", config.context_dim, &config.oracle_encoder_hiddens)?;
            let enc_last = enc.out_dim(config.context_dim);
            let enc_out = Linear::resolve(store, "encoder_out", enc_last, config.n_v)?;
            let trunk = ReluStack::resolve(store, "trunk", config.n_s + config.n_v, &config.trunk_hiddens)?;
            let last = trunk.out_dim(config.n_s + config.n_v);
            Arch::Oracle {
                enc,
                enc_out,
                trunk,
                mean: Linear::resolve(store, "mean", last, config.n_a)?,
                log_std: Linear::resolve(store, "log_std", last, config.n_a)?,
            }
        }
        PolicyKind::Tcn => {
            let tcn = Tcn::resolve(store, "tcn", config.channels(), &config.tcn_filters, &config.tcn_kernels, &config.tcn_strides)?;
            let enc_mlp = ReluStack::resolve(store, "enc_mlp", feat_dim, &config.encoder_mlp_hiddens)?;
            let enc_last = enc_mlp.out_dim(feat_dim);
            let enc_out = Linear::resolve(store, "encoder_out", enc_last, config.n_v)?;
            let trunk = ReluStack::resolve(store, "trunk", config.n_s + config.n_v, &config.trunk_hiddens)?;
            let last = trunk.out_dim(config.n_s + config.n_v);
            Arch::Tcn {
                tcn,
                enc_mlp,
                enc_out,
                trunk,
                mean: Linear::resolve(store, "mean", last, config.n_a)?,
                log_std: Linear::resolve(store, "log_std", last, config.n_a)?,
            }
        }
        PolicyKind::Dmap => {
            let tcn = Tcn::resolve(store, "tcn", 1, &config.tcn_filters, &config.tcn_kernels, &config.tcn_strides)?;
            let feat = ReluStack::resolve(store, "feat_mlp", feat_dim, &config.encoder_mlp_hiddens)?;
            let feat_last = feat.out_dim(feat_dim);
            let k_head = Linear::resolve(store, "k_head", feat_last, config.n_a)?;
            let v_head = Linear::resolve(store, "v_head", feat_last, config.n_v)?;
            let ctrl_in = config.n_s + config.n_a + config.n_v;
            let controllers = (0..config.n_a)
                .map(|i| {
                    let trunk = ReluStack::resolve(store, &format!("ctrl/{i}/trunk"), ctrl_in, &config.controller_hiddens)?;
                    let last = trunk.out_dim(ctrl_in);
                    Ok(Controller {
                        trunk,
                        mean: Linear::resolve(store, &format!("ctrl/{i}/mean"), last, 1)?,
                        log_std: Linear::resolve(store, &format!("ctrl/{i}/log_std"), last, 1)?,
                    })
                })
                .collect::<Result<Vec<_>, PolicyError>>()?;
            Arch::Dmap { tcn, feat, k_head, v_head, controllers }
        }
    })
}
