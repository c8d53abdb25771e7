//! Experiment configuration: a strict line-based `key = value` format with
//! `[section]` tables.
//!
//! Silent hyperparameter typos are the classic way to burn a training
//! budget, so parsing is unforgiving: unknown sections, unknown keys,
//! duplicate keys, malformed values and out-of-grid sigmas are all hard
//! errors. Values are numbers, booleans, bare or quoted strings, and flat
//! lists like `[1, 2, 3]`. `#` starts a comment.
//!
//! ```text
//! env = hopper2d
//! policy = dmap
//! sigma_train = 0.3
//! seeds = [1, 2, 3, 4, 5]
//!
//! [train]
//! total_steps = 200000
//!
//! [eval]
//! test_sigmas = [0.1, 0.3, 0.5, 0.7]
//! ```

use std::collections::BTreeMap;

use crate::envs::EnvSpec;
use crate::policies::PolicyKind;
use crate::sac::{PerConfig, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("duplicate key `{key}` in [{section}]")]
    DuplicateKey { section: String, key: String },
    #[error("[{section}] {key}: {msg}")]
    BadValue { section: String, key: String, msg: String },
    #[error("missing required key `{key}` in [{section}]")]
    MissingKey { section: String, key: String },
    #[error("bad --set override `{0}` (want section.key=value or key=value)")]
    BadOverride(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Number(f64),
    Bool(bool),
    Str(String),
    List(Vec<f64>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::List(_) => "list",
        }
    }

    pub fn render(&self) -> String {
        match self {
            Value::Number(v) => format!("{v}"),
            Value::Bool(b) => format!("{b}"),
            Value::Str(s) => s.clone(),
            Value::List(xs) => {
                let inner: Vec<String> = xs.iter().map(|v| format!("{v}")).collect();
                format!("[{}]", inner.join(", "))
            }
        }
    }
}

/// Parsed but not yet validated: ordered `(section, key) -> value`.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), Value>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
        let mut out = RawConfig::default();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or(ConfigError::Parse { line: line_no, msg: "unterminated section header".into() })?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(ConfigError::Parse { line: line_no, msg: format!("bad section name `{name}`") });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Parse { line: line_no, msg: "expected `key = value`".into() })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Parse { line: line_no, msg: format!("bad key `{key}`") });
            }
            let value = parse_value(value.trim(), line_no)?;
            if out.entries.insert((section.clone(), key.to_string()), value).is_some() {
                return Err(ConfigError::DuplicateKey { section: section.clone(), key: key.to_string() });
            }
        }
        Ok(out)
    }

    /// Apply a `--set section.key=value` (or `key=value` for the top level)
    /// override on top of the parsed file.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (path, value) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
        let (section, key) = match path.trim().split_once('.') {
            Some((s, k)) => (s.trim().to_string(), k.trim().to_string()),
            None => (String::new(), path.trim().to_string()),
        };
        if key.is_empty() {
            return Err(ConfigError::BadOverride(spec.to_string()));
        }
        let value = parse_value(value.trim(), 0).map_err(|_| ConfigError::BadOverride(spec.to_string()))?;
        self.entries.insert((section, key), value);
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    // a # inside quotes stays part of the string
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_value(s: &str, line: usize) -> Result<Value, ConfigError> {
    if s.is_empty() {
        return Err(ConfigError::Parse { line, msg: "empty value".into() });
    }
    if let Some(rest) = s.strip_prefix('[') {
        let inner = rest
            .strip_suffix(']')
            .ok_or(ConfigError::Parse { line, msg: "unterminated list".into() })?;
        let mut items = Vec::new();
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let v: f64 = part
                .parse()
                .map_err(|_| ConfigError::Parse { line, msg: format!("bad list element `{part}`") })?;
            items.push(v);
        }
        return Ok(Value::List(items));
    }
    if let Some(rest) = s.strip_prefix('"') {
        let inner = rest
            .strip_suffix('"')
            .ok_or(ConfigError::Parse { line, msg: "unterminated string".into() })?;
        return Ok(Value::Str(inner.to_string()));
    }
    match s {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    if let Ok(v) = s.parse::<f64>() {
        if v.is_finite() {
            return Ok(Value::Number(v));
        }
        return Err(ConfigError::Parse { line, msg: format!("non-finite number `{s}`") });
    }
    if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' || c == '/') {
        return Ok(Value::Str(s.to_string()));
    }
    Err(ConfigError::Parse { line, msg: format!("cannot parse value `{s}`") })
}

/// Tracks which keys a schema consumed so leftovers can be rejected.
struct Section<'a> {
    name: &'a str,
    entries: Vec<(&'a str, &'a Value)>,
    consumed: Vec<bool>,
}

impl<'a> Section<'a> {
    fn new(raw: &'a RawConfig, name: &'a str) -> Section<'a> {
        let entries: Vec<(&str, &Value)> = raw
            .entries
            .iter()
            .filter(|((s, _), _)| s == name)
            .map(|((_, k), v)| (k.as_str(), v))
            .collect();
        let consumed = vec![false; entries.len()];
        Section { name, entries, consumed }
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        for (i, (k, v)) in self.entries.iter().enumerate() {
            if *k == key {
                self.consumed[i] = true;
                return Some(v);
            }
        }
        None
    }

    fn number(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Number(v)) => Ok(*v),
            Some(other) => Err(self.type_err(key, "number", other)),
        }
    }

    fn integer(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Number(v)) if v.fract() == 0.0 && *v >= 0.0 => Ok(*v as u64),
            Some(other) => Err(self.type_err(key, "non-negative integer", other)),
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(other) => Err(self.type_err(key, "bool", other)),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Str(s)) => Ok(Some(s.clone())),
            Some(other) => Err(self.type_err(key, "string", other)),
        }
    }

    fn list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::List(xs)) => Ok(xs.clone()),
            Some(other) => Err(self.type_err(key, "list", other)),
        }
    }

    fn type_err(&self, key: &str, want: &str, got: &Value) -> ConfigError {
        ConfigError::BadValue {
            section: self.name.to_string(),
            key: key.to_string(),
            msg: format!("expected {want}, got {}", got.type_name()),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (i, (k, _)) in self.entries.iter().enumerate() {
            if !self.consumed[i] {
                return Err(ConfigError::UnknownKey { section: self.name.to_string(), key: k.to_string() });
            }
        }
        Ok(())
    }
}

/// The training-side sigma grid (plus 0.0 for the unperturbed baseline) and
/// the evaluation grid.
pub const TRAIN_SIGMAS: &[f64] = &[0.0, 0.1, 0.3, 0.5];
pub const EVAL_SIGMAS: &[f64] = &[0.1, 0.3, 0.5, 0.7];

/// Fully resolved experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub env: String,
    pub policy: PolicyKind,
    pub sigma_train: f64,
    pub seeds: Vec<u64>,
    pub out_dir: Option<String>,
    pub train: TrainConfig,
    pub eval: EvalBlock,
    pub distill: DistillBlock,
    pub analyze: AnalyzeBlock,
}

#[derive(Clone, Debug)]
pub struct EvalBlock {
    pub test_sigmas: Vec<f64>,
    pub testset_seed: u64,
    pub episodes: usize,
}

#[derive(Clone, Debug)]
pub struct DistillBlock {
    pub oracle: Option<String>,
    pub episodes: usize,
    pub stride: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub heldout_fraction: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug)]
pub struct AnalyzeBlock {
    pub episodes: usize,
}

impl ExperimentConfig {
    /// Validate a raw config against the schema and the published grids.
    pub fn from_raw(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
        // reject unknown sections first
        for (section, _) in raw.entries.keys() {
            if !["", "train", "eval", "distill", "analyze"].contains(&section.as_str()) {
                return Err(ConfigError::UnknownSection(section.clone()));
            }
        }

        let mut top = Section::new(raw, "");
        let env = top
            .string("env")?
            .ok_or(ConfigError::MissingKey { section: "".into(), key: "env".into() })?;
        EnvSpec::by_name(&env).map_err(|e| ConfigError::BadValue {
            section: "".into(),
            key: "env".into(),
            msg: e.to_string(),
        })?;
        let policy: PolicyKind = top
            .string("policy")?
            .unwrap_or_else(|| "simple".into())
            .parse()
            .map_err(|e| ConfigError::BadValue { section: "".into(), key: "policy".into(), msg: format!("{e}") })?;
        let sigma_train = top.number("sigma_train", 0.1)?;
        if !TRAIN_SIGMAS.iter().any(|&s| (s - sigma_train).abs() < 1e-12) {
            return Err(ConfigError::BadValue {
                section: "".into(),
                key: "sigma_train".into(),
                msg: format!("{sigma_train} outside the training grid {TRAIN_SIGMAS:?}"),
            });
        }
        let seeds: Vec<u64> = top
            .list("seeds", &[1.0, 2.0, 3.0, 4.0, 5.0])?
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && v >= 0.0 {
                    Ok(v as u64)
                } else {
                    Err(ConfigError::BadValue {
                        section: "".into(),
                        key: "seeds".into(),
                        msg: format!("seed {v} is not a non-negative integer"),
                    })
                }
            })
            .collect::<Result<_, _>>()?;
        if seeds.is_empty() {
            return Err(ConfigError::BadValue { section: "".into(), key: "seeds".into(), msg: "empty".into() });
        }
        let out_dir = top.string("out_dir")?;
        top.finish()?;

        let mut train_sec = Section::new(raw, "train");
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            total_steps: train_sec.integer("total_steps", 200_000)?,
            sigma_train,
            seed: 0, // per-run seed fills this in
            gamma: train_sec.number("gamma", defaults.gamma)?,
            actor_lr: train_sec.number("actor_lr", defaults.actor_lr)?,
            critic_lr: train_sec.number("critic_lr", defaults.critic_lr)?,
            alpha_lr: train_sec.number("alpha_lr", defaults.alpha_lr)?,
            batch_size: train_sec.integer("batch_size", defaults.batch_size as u64)? as usize,
            tau: train_sec.number("tau", defaults.tau)?,
            target_entropy: train_sec.get("target_entropy").map(|v| match v {
                Value::Number(x) => Ok(*x),
                other => Err(train_sec.type_err("target_entropy", "number", other)),
            }).transpose()?,
            warmup_steps: train_sec.integer("warmup_steps", defaults.warmup_steps)?,
            update_every: train_sec.integer("update_every", defaults.update_every)?,
            buffer_capacity: train_sec.integer("buffer_capacity", defaults.buffer_capacity as u64)? as usize,
            prioritized: train_sec.boolean("prioritized", true)?,
            per: PerConfig {
                alpha: train_sec.number("per_alpha", 0.6)?,
                beta_start: train_sec.number("per_beta_start", 0.4)?,
                beta_end: train_sec.number("per_beta_end", 1.0)?,
            },
            init_alpha: train_sec.number("init_alpha", defaults.init_alpha)?,
            checkpoint_every: match train_sec.integer("checkpoint_every", 0)? {
                0 => None,
                v => Some(v),
            },
        };
        train_sec.finish()?;

        let mut eval_sec = Section::new(raw, "eval");
        let test_sigmas = eval_sec.list("test_sigmas", &[0.1, 0.3, 0.5, 0.7])?;
        for &s in &test_sigmas {
            if !EVAL_SIGMAS.iter().any(|&g| (g - s).abs() < 1e-12) {
                return Err(ConfigError::BadValue {
                    section: "eval".into(),
                    key: "test_sigmas".into(),
                    msg: format!("{s} outside the evaluation grid {EVAL_SIGMAS:?}"),
                });
            }
        }
        let eval = EvalBlock {
            test_sigmas,
            testset_seed: eval_sec.integer("testset_seed", 7)?,
            episodes: eval_sec.integer("episodes", 100)? as usize,
        };
        eval_sec.finish()?;

        let mut distill_sec = Section::new(raw, "distill");
        let distill = DistillBlock {
            oracle: distill_sec.string("oracle")?,
            episodes: distill_sec.integer("episodes", 80)? as usize,
            stride: distill_sec.integer("stride", 10)?.max(1) as usize,
            epochs: distill_sec.integer("epochs", 50)? as usize,
            lr: distill_sec.number("lr", 3e-4)?,
            batch_size: distill_sec.integer("batch_size", 256)? as usize,
            heldout_fraction: distill_sec.number("heldout_fraction", 0.1)?,
            sigma: distill_sec.number("sigma", 0.3)?,
        };
        distill_sec.finish()?;

        let mut analyze_sec = Section::new(raw, "analyze");
        let analyze = AnalyzeBlock { episodes: analyze_sec.integer("episodes", 3)? as usize };
        analyze_sec.finish()?;

        Ok(ExperimentConfig { env, policy, sigma_train, seeds, out_dir, train, eval, distill, analyze })
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_raw(&RawConfig::parse(text)?)
    }

    /// Flatten for the run manifest.
    pub fn to_flat(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("env".into(), self.env.clone());
        m.insert("policy".into(), self.policy.to_string());
        m.insert("sigma_train".into(), format!("{}", self.sigma_train));
        m.insert(
            "seeds".into(),
            format!("[{}]", self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")),
        );
        let t = &self.train;
        for (k, v) in [
            ("train.total_steps", format!("{}", t.total_steps)),
            ("train.gamma", format!("{}", t.gamma)),
            ("train.actor_lr", format!("{}", t.actor_lr)),
            ("train.critic_lr", format!("{}", t.critic_lr)),
            ("train.alpha_lr", format!("{}", t.alpha_lr)),
            ("train.batch_size", format!("{}", t.batch_size)),
            ("train.tau", format!("{}", t.tau)),
            ("train.warmup_steps", format!("{}", t.warmup_steps)),
            ("train.update_every", format!("{}", t.update_every)),
            ("train.buffer_capacity", format!("{}", t.buffer_capacity)),
            ("train.prioritized", format!("{}", t.prioritized)),
            ("train.per_alpha", format!("{}", t.per.alpha)),
            ("train.per_beta_start", format!("{}", t.per.beta_start)),
            ("train.per_beta_end", format!("{}", t.per.beta_end)),
            ("train.init_alpha", format!("{}", t.init_alpha)),
        ] {
            m.insert(k.into(), v);
        }
        m.insert(
            "eval.test_sigmas".into(),
            format!("[{}]", self.eval.test_sigmas.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")),
        );
        m.insert("eval.testset_seed".into(), format!("{}", self.eval.testset_seed));
        m.insert("eval.episodes".into(), format!("{}", self.eval.episodes));
        m
    }
}
