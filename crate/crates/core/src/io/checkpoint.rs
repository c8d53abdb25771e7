//! Versioned binary policy checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8  b"DMAPCKPT"
//! version  u32
//! kind     str            (u16 length + utf-8)
//! env      str
//! dims     4 x u32        (n_s, n_a, n_v, history_len)
//! config   u32 length + PolicyConfig as JSON
//! params   u32 count, then per parameter:
//!          name str, ndim u8, ndim x u32 dims, elems x f64
//! ```
//!
//! A save -> load -> forward roundtrip is bit-identical: values are written
//! as raw IEEE-754 bytes. The parser is defensive — every length is bounds-
//! checked against the remaining input before any allocation.

use std::path::Path;

use crate::policies::{Policy, PolicyConfig, PolicyError};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"DMAPCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic bytes (not a policy checkpoint)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint: {0}")]
    Truncated(&'static str),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("{0} trailing bytes after the last parameter")]
    TrailingBytes(usize),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn str(&mut self, what: &'static str) -> Result<String, CheckpointError> {
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CheckpointError::Malformed(format!("{what}: invalid utf-8")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    assert!(bytes.len() <= u16::MAX as usize, "string too long for checkpoint");
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Serialize a policy to checkpoint bytes.
pub fn checkpoint_bytes(policy: &Policy) -> Vec<u8> {
    let config_json = serde_json::to_vec(&policy.config).expect("config serializes");
    let mut out = Vec::with_capacity(64 + policy.store.total_elems() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    push_str(&mut out, &policy.kind().to_string());
    push_str(&mut out, &policy.env_name);
    for dim in [policy.config.n_s, policy.config.n_a, policy.config.n_v, policy.config.history_len] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&config_json);
    out.extend_from_slice(&(policy.store.len() as u32).to_le_bytes());
    for param in policy.store.iter() {
        push_str(&mut out, &param.name);
        let shape = param.value.shape();
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in param.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Parse checkpoint bytes back into a policy.
pub fn policy_from_bytes(bytes: &[u8]) -> Result<Policy, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let kind = r.str("kind")?;
    let env = r.str("env")?;
    let mut dims = [0u32; 4];
    for d in dims.iter_mut() {
        *d = r.u32("dims")?;
    }
    let config_len = r.u32("config length")? as usize;
    let config_bytes = r.take(config_len, "config")?;
    let config: PolicyConfig = serde_json::from_slice(config_bytes)
        .map_err(|e| CheckpointError::Malformed(format!("config: {e}")))?;
    if config.kind.to_string() != kind {
        return Err(CheckpointError::Malformed(format!(
            "header kind `{kind}` disagrees with config kind `{}`",
            config.kind
        )));
    }
    if [config.n_s, config.n_a, config.n_v, config.history_len] != dims.map(|d| d as usize) {
        return Err(CheckpointError::Malformed("header dims disagree with config".into()));
    }

    let count = r.u32("parameter count")? as usize;
    let mut store = ParamStore::new();
    for i in 0..count {
        let name = r.str("parameter name")?;
        let ndim = r.u8("ndim")? as usize;
        if ndim > 4 {
            return Err(CheckpointError::Malformed(format!("parameter {i}: {ndim} dims")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut elems: usize = 1;
        for _ in 0..ndim {
            let d = r.u32("shape")? as usize;
            elems = elems.saturating_mul(d);
            shape.push(d);
        }
        if elems.saturating_mul(8) > r.remaining() {
            return Err(CheckpointError::Truncated("parameter data"));
        }
        let raw = r.take(elems * 8, "parameter data")?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let tensor = Tensor::new(shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        store
            .insert(&name, tensor)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    }
    if r.remaining() != 0 {
        return Err(CheckpointError::TrailingBytes(r.remaining()));
    }
    Ok(Policy::from_store(config, &env, store)?)
}

pub fn save_checkpoint(policy: &Policy, path: &Path) -> Result<(), CheckpointError> {
    Ok(std::fs::write(path, checkpoint_bytes(policy))?)
}

pub fn load_checkpoint(path: &Path) -> Result<Policy, CheckpointError> {
    policy_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;
    use crate::policies::{ObsBundle, PolicyKind, TransitionHistory};

    #[test]
    fn roundtrip_is_bit_identical_for_every_kind() {
        let spec = EnvSpec::hopper2d();
        for kind in [PolicyKind::Simple, PolicyKind::Oracle, PolicyKind::Tcn, PolicyKind::Dmap] {
            let policy = Policy::for_env(kind, &spec, 7).unwrap();
            let bytes = checkpoint_bytes(&policy);
            let restored = policy_from_bytes(&bytes).unwrap();

            let state = vec![0.123; spec.n_s];
            let ctx = vec![0.05; spec.perturbation_dim];
            let mut hist = TransitionHistory::new(spec.n_s, spec.n_a, 30);
            hist.push(&state, &vec![0.2; spec.n_a]);
            let bundle = |p: &Policy| {
                let b = ObsBundle {
                    state: &state,
                    context: (p.kind() == PolicyKind::Oracle).then_some(ctx.as_slice()),
                    history: matches!(p.kind(), PolicyKind::Tcn | PolicyKind::Dmap).then_some(&hist),
                };
                p.act(&b, true, None).unwrap().action
            };
            let before = bundle(&policy);
            let after = bundle(&restored);
            for (x, y) in before.iter().zip(&after) {
                assert_eq!(x.to_bits(), y.to_bits(), "{kind}: forward changed after roundtrip");
            }
            // serialization itself is deterministic
            assert_eq!(bytes, checkpoint_bytes(&restored));
        }
    }

    #[test]
    fn corrupted_magic_is_a_distinct_error() {
        let spec = EnvSpec::hopper2d();
        let policy = Policy::for_env(PolicyKind::Simple, &spec, 1).unwrap();
        let mut bytes = checkpoint_bytes(&policy);
        bytes[0] ^= 0xff;
        assert!(matches!(policy_from_bytes(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn unsupported_version_is_reported() {
        let spec = EnvSpec::hopper2d();
        let policy = Policy::for_env(PolicyKind::Simple, &spec, 1).unwrap();
        let mut bytes = checkpoint_bytes(&policy);
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(policy_from_bytes(&bytes), Err(CheckpointError::Version(99))));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let spec = EnvSpec::hopper2d();
        let policy = Policy::for_env(PolicyKind::Simple, &spec, 1).unwrap();
        let bytes = checkpoint_bytes(&policy);
        assert!(matches!(
            policy_from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0, 1, 2]);
        assert!(matches!(policy_from_bytes(&extended), Err(CheckpointError::TrailingBytes(3))));
    }
}
