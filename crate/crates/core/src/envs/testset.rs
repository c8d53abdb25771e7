//! Versioned JSON test-set files.
//!
//! Layout: `{ "version": 1, "env": "...", "sigma": s, "seed": n,
//! "contexts": [[c0..c4], ...] }`. Loading validates the environment name,
//! the component count and the `[-sigma, sigma]` bounds, so a file can never
//! smuggle an out-of-cube morphology into an evaluation.

use serde::{Deserialize, Serialize};

use super::{EnvSpec, MorphologyContext};

pub const TEST_SET_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TestSetError {
    #[error("malformed test set: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported test set version {0}")]
    Version(u32),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct TestSetFile {
    version: u32,
    env: String,
    sigma: f64,
    seed: u64,
    contexts: Vec<Vec<f64>>,
}

/// A validated test set.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet {
    pub env: String,
    pub sigma: f64,
    pub seed: u64,
    pub contexts: Vec<MorphologyContext>,
}

impl TestSet {
    pub fn generate(spec: &EnvSpec, sigma: f64, n: usize, seed: u64) -> Self {
        TestSet {
            env: spec.name.to_string(),
            sigma,
            seed,
            contexts: super::make_test_set(sigma, spec.perturbation_dim, n, seed),
        }
    }

    pub fn to_json(&self) -> String {
        let file = TestSetFile {
            version: TEST_SET_VERSION,
            env: self.env.clone(),
            sigma: self.sigma,
            seed: self.seed,
            contexts: self.contexts.iter().map(|c| c.components().to_vec()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("test set serializes")
    }

    /// Parse and validate raw bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TestSetError> {
        let file: TestSetFile = serde_json::from_slice(bytes)?;
        if file.version != TEST_SET_VERSION {
            return Err(TestSetError::Version(file.version));
        }
        let spec = EnvSpec::by_name(&file.env)
            .map_err(|e| TestSetError::Invalid(e.to_string()))?;
        if !file.sigma.is_finite() || file.sigma < 0.0 {
            return Err(TestSetError::Invalid(format!("bad sigma {}", file.sigma)));
        }
        if file.contexts.is_empty() {
            return Err(TestSetError::Invalid("empty test set".into()));
        }
        let mut contexts = Vec::with_capacity(file.contexts.len());
        for (i, comps) in file.contexts.into_iter().enumerate() {
            if comps.len() != spec.perturbation_dim {
                return Err(TestSetError::Invalid(format!(
                    "context {i} has {} components, expected {}",
                    comps.len(),
                    spec.perturbation_dim
                )));
            }
            let ctx = MorphologyContext::new(file.sigma, comps)
                .map_err(|e| TestSetError::Invalid(format!("context {i}: {e}")))?;
            contexts.push(ctx);
        }
        Ok(TestSet { env: file.env, sigma: file.sigma, seed: file.seed, contexts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_everything() {
        let spec = EnvSpec::hopper2d();
        let ts = TestSet::generate(&spec, 0.3, 10, 7);
        let json = ts.to_json();
        let back = TestSet::from_bytes(json.as_bytes()).unwrap();
        assert_eq!(ts, back);
    }

    #[test]
    fn serialization_is_deterministic() {
        let spec = EnvSpec::hopper2d();
        let a = TestSet::generate(&spec, 0.3, 100, 7).to_json();
        let b = TestSet::generate(&spec, 0.3, 100, 7).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_bounds_context_is_rejected() {
        let json = r#"{"version":1,"env":"hopper2d","sigma":0.1,"seed":0,
                        "contexts":[[0.0,0.0,0.0,0.0,0.5]]}"#;
        assert!(matches!(TestSet::from_bytes(json.as_bytes()), Err(TestSetError::Invalid(_))));
    }

    #[test]
    fn wrong_version_and_env_are_rejected() {
        let v = r#"{"version":9,"env":"hopper2d","sigma":0.1,"seed":0,"contexts":[[0,0,0,0,0]]}"#;
        assert!(matches!(TestSet::from_bytes(v.as_bytes()), Err(TestSetError::Version(9))));
        let e = r#"{"version":1,"env":"ant","sigma":0.1,"seed":0,"contexts":[[0,0,0,0,0]]}"#;
        assert!(matches!(TestSet::from_bytes(e.as_bytes()), Err(TestSetError::Invalid(_))));
    }
}
