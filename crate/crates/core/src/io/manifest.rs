//! Run manifests: every artifact directory gets a JSON file capturing the
//! resolved configuration, the source revision and content hashes of the
//! inputs, sufficient to re-run the producing command.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::fnv1a;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub command: String,
    /// Fully resolved configuration as flat `section.key = value` pairs.
    pub config: BTreeMap<String, String>,
    /// `git describe --always --dirty`, or "unknown" outside a repository.
    pub git: String,
    /// FNV-1a 64-bit content hashes of input files, keyed by path.
    pub inputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, String>) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            command: command.to_string(),
            config,
            git: git_describe(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        self.inputs.insert(path.display().to_string(), format!("{:016x}", fnv1a(&bytes)));
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.json"), self.to_json())
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_deterministic_for_fixed_inputs() {
        let mut cfg = BTreeMap::new();
        cfg.insert("env".to_string(), "hopper2d".to_string());
        let mut a = Manifest::new("testset", cfg.clone());
        let mut b = Manifest::new("testset", cfg);
        a.git = "fixed".into();
        b.git = "fixed".into();
        assert_eq!(a.to_json(), b.to_json());
    }
}
