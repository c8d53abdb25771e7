//! Phase two of RMA: supervised regression of a temporal-convolution
//! encoder onto a trained Oracle's morphology encoding.
//!
//! A frozen Oracle policy is rolled over fresh morphologies; at every
//! sampled step the transition window and the Oracle's encoding of the
//! episode's true context form one `(history, target)` pair. A fresh
//! tcn-kind encoder is then fit by minimizing mean squared error, splitting
//! train/held-out by morphology so no body appears on both sides. The
//! distilled encoder is finally spliced onto the Oracle's trunk, producing
//! a policy that acts from `(state, history)` alone.

use std::io::Write as _;
use std::path::Path;

use crate::envs::{Env, EnvSpec, MorphologyContext};
use crate::policies::{ObsBundle, Policy, PolicyError, PolicyKind, TransitionHistory};
use crate::rng::Rng;
use crate::sac::SacError;
use crate::tensor::{AdamHyper, Tape, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("distillation needs an oracle checkpoint, got a {0} policy")]
    NotAnOracle(PolicyKind),
    #[error("student encoder must be tcn-kind, got {0}")]
    NotATcnStudent(PolicyKind),
    #[error("encoding width mismatch: teacher {teacher}, student {student}")]
    EncodingWidth { teacher: usize, student: usize },
    #[error("checkpoint was trained on `{ckpt}`, environment is `{env}`")]
    EnvMismatch { ckpt: String, env: String },
    #[error("dataset split is empty ({0})")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Rollout(#[from] SacError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("malformed dataset: {0}")]
    Dataset(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One supervised pair: the transition window and the frozen teacher's
/// encoding of the episode's true context.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillSample {
    pub history: Tensor,
    pub target: Vec<f64>,
    pub morphology_id: u32,
}

/// Rollout-collection knobs. Samples start once the window holds `T` real
/// transitions and are then strided to decorrelate them.
#[derive(Clone, Copy, Debug)]
pub struct CollectConfig {
    pub episodes: usize,
    pub sigma: f64,
    pub stride: usize,
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig { episodes: 60, sigma: 0.3, stride: 10, seed: 0 }
    }
}

/// Roll the Oracle over fresh contexts and record `(H(t), encode(c))`
/// pairs every `stride` steps from step `T` on. Deterministic per seed.
pub fn collect_rollouts(
    oracle: &Policy,
    spec: &EnvSpec,
    config: &CollectConfig,
) -> Result<Vec<DistillSample>, DistillError> {
    if oracle.kind() != PolicyKind::Oracle {
        return Err(DistillError::NotAnOracle(oracle.kind()));
    }
    if oracle.env_name != spec.name {
        return Err(DistillError::EnvMismatch { ckpt: oracle.env_name.clone(), env: spec.name.to_string() });
    }
    let t_window = oracle.config.history_len;
    let mut samples = Vec::new();
    for ep in 0..config.episodes {
        let context = crate::envs::episode_morphology(config.sigma, spec.perturbation_dim, config.seed, ep as u64);
        let target = encode_context(oracle, &context)?;
        let reset_seed = Rng::stream(config.seed, "distill-reset", &[ep as u64]).next_u64();
        let mut env = Env::reset(spec, &context, reset_seed).map_err(SacError::from)?;
        let mut explore = Rng::stream(config.seed, "distill-explore", &[ep as u64]);
        let mut history = TransitionHistory::new(spec.n_s, spec.n_a, t_window);
        let mut obs = env.observation();
        let mut step = 0usize;
        loop {
            let bundle = ObsBundle { state: &obs, context: Some(context.components()), history: None };
            let action = oracle.act(&bundle, false, Some(&mut explore))?.action;
            let result = env.step(&action).map_err(SacError::from)?;
            history.push(&obs, &action);
            obs = result.observation;
            step += 1;
            // first full window exists at step T; stride thereafter
            if step >= t_window && (step - t_window) % config.stride == 0 {
                samples.push(DistillSample {
                    history: history.as_matrix(),
                    target: target.clone(),
                    morphology_id: ep as u32,
                });
            }
            if result.done {
                break;
            }
        }
    }
    Ok(samples)
}

fn encode_context(oracle: &Policy, context: &MorphologyContext) -> Result<Vec<f64>, DistillError> {
    let mut tape = Tape::new();
    let c = tape.constant(Tensor::new(vec![1, context.dim()], context.components().to_vec()).expect("context shape"));
    let enc = oracle.oracle_encode(&mut tape, c, false)?;
    Ok(tape.value(enc).data().to_vec())
}

/// Regression hyperparameters (scales follow the published training table).
#[derive(Clone, Copy, Debug)]
pub struct DistillConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub heldout_fraction: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { epochs: 50, lr: 3e-4, batch_size: 256, heldout_fraction: 0.1, seed: 0 }
    }
}

/// Quality report of one distillation run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DistillReport {
    pub train_mse: f64,
    pub heldout_mse: f64,
    pub initial_heldout_mse: f64,
    /// Held-out coefficient of determination per encoding dimension;
    /// `None` when the target dimension is constant (R^2 undefined).
    pub r2: Vec<Option<f64>>,
    pub train_samples: usize,
    pub heldout_samples: usize,
}

impl DistillReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fit a fresh tcn-kind encoder to the dataset. The split is by morphology
/// id — timesteps of one body never straddle the split.
pub fn distill(
    student: &mut Policy,
    dataset: &[DistillSample],
    config: &DistillConfig,
) -> Result<DistillReport, DistillError> {
    if student.kind() != PolicyKind::Tcn {
        return Err(DistillError::NotATcnStudent(student.kind()));
    }
    if dataset.is_empty() {
        return Err(DistillError::EmptySplit("dataset"));
    }
    let enc_dim = dataset[0].target.len();
    if enc_dim != student.config.n_v {
        return Err(DistillError::EncodingWidth { teacher: enc_dim, student: student.config.n_v });
    }

    // split morphology ids, shuffled deterministically
    let mut ids: Vec<u32> = dataset.iter().map(|s| s.morphology_id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(DistillError::EmptySplit("need at least two morphologies to split"));
    }
    let mut rng = Rng::stream(config.seed, "distill-split", &[]);
    rng.shuffle(&mut ids);
    let heldout_count = ((ids.len() as f64 * config.heldout_fraction).round() as usize).clamp(1, ids.len() - 1);
    let heldout_ids: std::collections::HashSet<u32> = ids[..heldout_count].iter().copied().collect();
    let train: Vec<&DistillSample> = dataset.iter().filter(|s| !heldout_ids.contains(&s.morphology_id)).collect();
    let heldout: Vec<&DistillSample> = dataset.iter().filter(|s| heldout_ids.contains(&s.morphology_id)).collect();
    if train.is_empty() {
        return Err(DistillError::EmptySplit("train"));
    }
    if heldout.is_empty() {
        return Err(DistillError::EmptySplit("held-out"));
    }

    let initial_heldout_mse = encoder_mse(student, &heldout)?;
    let hyper = AdamHyper::with_lr(config.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_rng = Rng::stream(config.seed, "distill-epochs", &[]);
    for _epoch in 0..config.epochs {
        epoch_rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&DistillSample> = chunk.iter().map(|&i| train[i]).collect();
            let mut tape = Tape::new();
            let (h, y) = pack(&batch, student);
            let hist = tape.constant(h);
            let target = tape.constant(y);
            let enc = student.tcn_encode(&mut tape, hist, true)?;
            let diff = tape.sub(enc, target);
            let sq = tape.mul(diff, diff);
            let loss = tape.mean_all(sq);
            let grads = tape.backward(loss);
            student.store.clear_grads();
            tape.accumulate_param_grads(&grads, &mut student.store);
            // the trunk and heads are not part of the regression (they get
            // replaced by the teacher's at assembly); freeze them under
            // explicit zero gradients
            for id in student.store.ids().collect::<Vec<_>>() {
                if student.store.grad(id).is_none() {
                    let len = student.store.value(id).len();
                    student.store.accumulate_grad(id, &vec![0.0; len]);
                }
            }
            student.store.adam_step(&hyper).map_err(PolicyError::from)?;
        }
    }

    let train_mse = encoder_mse(student, &train)?;
    let heldout_mse = encoder_mse(student, &heldout)?;
    let r2 = r_squared(student, &heldout)?;
    Ok(DistillReport {
        train_mse,
        heldout_mse,
        initial_heldout_mse,
        r2,
        train_samples: train.len(),
        heldout_samples: heldout.len(),
    })
}

fn pack(batch: &[&DistillSample], student: &Policy) -> (Tensor, Tensor) {
    let b = batch.len();
    let c = student.config.channels();
    let t = student.config.history_len;
    let enc = student.config.n_v;
    let mut h = Vec::with_capacity(b * c * t);
    let mut y = Vec::with_capacity(b * enc);
    for s in batch {
        h.extend_from_slice(s.history.data());
        y.extend_from_slice(&s.target);
    }
    (Tensor::new(vec![b, c, t], h).expect("history pack"), Tensor::new(vec![b, enc], y).expect("target pack"))
}

fn encoder_forward(student: &Policy, samples: &[&DistillSample]) -> Result<Vec<Vec<f64>>, DistillError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(512) {
        let mut tape = Tape::new();
        let (h, _) = pack(chunk, student);
        let hist = tape.constant(h);
        let enc = student.tcn_encode(&mut tape, hist, false)?;
        let data = tape.value(enc).data();
        let width = student.config.n_v;
        for i in 0..chunk.len() {
            out.push(data[i * width..(i + 1) * width].to_vec());
        }
    }
    Ok(out)
}

fn encoder_mse(student: &Policy, samples: &[&DistillSample]) -> Result<f64, DistillError> {
    let preds = encoder_forward(student, samples)?;
    let mut se = 0.0;
    let mut n = 0usize;
    for (p, s) in preds.iter().zip(samples) {
        for (a, b) in p.iter().zip(&s.target) {
            se += (a - b) * (a - b);
            n += 1;
        }
    }
    Ok(se / n as f64)
}

/// Per-dimension held-out R^2; `None` where the targets are constant.
fn r_squared(student: &Policy, samples: &[&DistillSample]) -> Result<Vec<Option<f64>>, DistillError> {
    let preds = encoder_forward(student, samples)?;
    let dim = student.config.n_v;
    let n = samples.len() as f64;
    let mut out = Vec::with_capacity(dim);
    for d in 0..dim {
        let mean = samples.iter().map(|s| s.target[d]).sum::<f64>() / n;
        let ss_tot: f64 = samples.iter().map(|s| (s.target[d] - mean).powi(2)).sum();
        let ss_res: f64 = preds.iter().zip(samples).map(|(p, s)| (p[d] - s.target[d]).powi(2)).sum();
        if ss_tot < 1e-12 {
            out.push(None);
        } else {
            out.push(Some(1.0 - ss_res / ss_tot));
        }
    }
    Ok(out)
}

/// Splice a distilled encoder onto a trained Oracle's trunk: the result is
/// a tcn-kind policy acting on `(state, history)` only.
pub fn assemble_rma(student: &Policy, oracle: &Policy) -> Result<Policy, DistillError> {
    if oracle.kind() != PolicyKind::Oracle {
        return Err(DistillError::NotAnOracle(oracle.kind()));
    }
    if student.kind() != PolicyKind::Tcn {
        return Err(DistillError::NotATcnStudent(student.kind()));
    }
    if student.config.n_v != oracle.config.n_v {
        return Err(DistillError::EncodingWidth { teacher: oracle.config.n_v, student: student.config.n_v });
    }
    if student.config.n_s != oracle.config.n_s || student.config.n_a != oracle.config.n_a {
        return Err(DistillError::EnvMismatch { ckpt: oracle.env_name.clone(), env: student.env_name.clone() });
    }
    if student.config.trunk_hiddens != oracle.config.trunk_hiddens {
        return Err(DistillError::Dataset(format!(
            "trunk shapes differ: student {:?}, oracle {:?}",
            student.config.trunk_hiddens, oracle.config.trunk_hiddens
        )));
    }
    // the assembled policy carries the student's encoder parameters and the
    // oracle's trunk and heads, matched by name
    let scaffold = Policy::new(student.config.clone(), &oracle.env_name, 0)?;
    let mut store = scaffold.store.clone();
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        let source = if name.starts_with("tcn/") || name.starts_with("enc_mlp/") || name.starts_with("encoder_out/") {
            student.store.id(&name).map(|sid| student.store.value(sid).clone())
        } else {
            oracle.store.id(&name).map(|oid| oracle.store.value(oid).clone())
        };
        let value = source.ok_or_else(|| PolicyError::MissingParam(name.clone()))?;
        store.set_value(id, value).map_err(PolicyError::from)?;
    }
    Ok(Policy::from_store(student.config.clone(), &oracle.env_name, store)?)
}

// ---- dataset file format ----------------------------------------------

pub const DATASET_MAGIC: &[u8; 8] = b"DMAPDSET";
pub const DATASET_VERSION: u32 = 1;

/// Serialize a dataset: magic, version, env, dims `(n_s, n_a, t, enc)`,
/// record count, then per record the morphology id, target and history
/// (all little-endian).
pub fn dataset_bytes(samples: &[DistillSample], env: &str, dims: [usize; 4]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let env_bytes = env.as_bytes();
    out.extend_from_slice(&(env_bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(env_bytes);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.morphology_id.to_le_bytes());
        for &x in &s.target {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for &x in s.history.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Parse and validate dataset bytes. Returns `(samples, env, dims)`.
#[allow(clippy::type_complexity)]
pub fn dataset_from_bytes(bytes: &[u8]) -> Result<(Vec<DistillSample>, String, [usize; 4]), DistillError> {
    struct Cur<'a> {
        bytes: &'a [u8],
        pos: usize,
    }
    impl<'a> Cur<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8], DistillError> {
            if self.bytes.len() - self.pos < n {
                return Err(DistillError::Dataset("truncated".into()));
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        fn remaining(&self) -> usize {
            self.bytes.len() - self.pos
        }
    }
    let err = |m: String| DistillError::Dataset(m);
    let mut cur = Cur { bytes, pos: 0 };
    if cur.take(8)? != DATASET_MAGIC {
        return Err(err("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let env_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
    let env = String::from_utf8(cur.take(env_len)?.to_vec()).map_err(|_| err("env name not utf-8".into()))?;
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    }
    let [n_s, n_a, t, enc] = dims;
    let channels = n_s.checked_add(n_a).ok_or_else(|| err("dims overflow".into()))?;
    let record = enc
        .checked_mul(8)
        .and_then(|v| v.checked_add(channels.checked_mul(t)?.checked_mul(8)?))
        .and_then(|v| v.checked_add(4))
        .ok_or_else(|| err("dims overflow".into()))?;
    let count = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let payload = cur.remaining();
    if count.checked_mul(record).map_or(true, |need| need != payload) {
        return Err(err("record count disagrees with payload size".into()));
    }
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let morphology_id = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let raw_t = cur.take(enc * 8)?;
        let target: Vec<f64> = raw_t.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let raw_h = cur.take(channels * t * 8)?;
        let hist: Vec<f64> = raw_h.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        samples.push(DistillSample {
            history: Tensor::new(vec![channels, t], hist).map_err(|e| err(e.to_string()))?,
            target,
            morphology_id,
        });
    }
    Ok((samples, env, dims))
}

pub fn save_dataset(path: &Path, samples: &[DistillSample], env: &str, dims: [usize; 4]) -> Result<(), DistillError> {
    Ok(std::fs::File::create(path)?.write_all(&dataset_bytes(samples, env, dims))?)
}

pub fn load_dataset(path: &Path) -> Result<(Vec<DistillSample>, String, [usize; 4]), DistillError> {
    dataset_from_bytes(&std::fs::read(path)?)
}
