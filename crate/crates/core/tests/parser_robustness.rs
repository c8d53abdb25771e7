//! Deterministic mutation fuzzing of every untrusted-input parser: random
//! byte flips, truncations and splices of valid artifacts must produce
//! clean errors, never panics, and accepted inputs must stay internally
//! consistent. (The checked-in `fuzz/` targets run the same surfaces under
//! libFuzzer; this keeps a fast regression version in `cargo test`.)

use dmap_core::config::ExperimentConfig;
use dmap_core::distill::{dataset_bytes, dataset_from_bytes, DistillSample};
use dmap_core::envs::{testset::TestSet, EnvSpec};
use dmap_core::io::{checkpoint_bytes, policy_from_bytes};
use dmap_core::policies::{Policy, PolicyConfig, PolicyKind};
use dmap_core::rng::Rng;
use dmap_core::tensor::Tensor;

fn mutations(seed_bytes: &[u8], rng: &mut Rng, count: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut m = seed_bytes.to_vec();
        match rng.below(4) {
            0 => {
                // flip a few bytes
                for _ in 0..1 + rng.below(8) {
                    if m.is_empty() {
                        break;
                    }
                    let i = rng.below(m.len());
                    m[i] ^= 1 << rng.below(8);
                }
            }
            1 => {
                // truncate
                let keep = rng.below(m.len().max(1));
                m.truncate(keep);
            }
            2 => {
                // splice random bytes
                let at = rng.below(m.len().max(1));
                let insert: Vec<u8> = (0..rng.below(32)).map(|_| rng.next_u64() as u8).collect();
                m.splice(at..at, insert);
            }
            _ => {
                // overwrite a window
                if !m.is_empty() {
                    let at = rng.below(m.len());
                    let end = (at + rng.below(16) + 1).min(m.len());
                    for b in &mut m[at..end] {
                        *b = rng.next_u64() as u8;
                    }
                }
            }
        }
        out.push(m);
    }
    out
}

#[test]
fn checkpoint_parser_survives_mutations() {
    let spec = EnvSpec::hopper2d();
    let mut cfg = PolicyConfig::for_env(PolicyKind::Simple, &spec);
    cfg.simple_hiddens = vec![8, 8];
    let policy = Policy::new(cfg, spec.name, 1).unwrap();
    let seed = checkpoint_bytes(&policy);
    let mut rng = Rng::new(0xc0ffee);
    for m in mutations(&seed, &mut rng, 400) {
        if let Ok(p) = policy_from_bytes(&m) {
            // accepted mutants must re-serialize and re-parse
            let again = checkpoint_bytes(&p);
            assert!(policy_from_bytes(&again).is_ok());
        }
    }
}

#[test]
fn testset_parser_survives_mutations() {
    let ts = TestSet::generate(&EnvSpec::hopper2d(), 0.3, 5, 7);
    let seed = ts.to_json().into_bytes();
    let mut rng = Rng::new(0xbeef);
    for m in mutations(&seed, &mut rng, 400) {
        if let Ok(parsed) = TestSet::from_bytes(&m) {
            for ctx in &parsed.contexts {
                for c in ctx.components() {
                    assert!(c.abs() <= parsed.sigma + 1e-12);
                }
            }
        }
    }
}

#[test]
fn config_parser_survives_mutations() {
    let seed = b"env = hopper2d\npolicy = dmap\nsigma_train = 0.3\nseeds = [1, 2]\n\n[train]\ntotal_steps = 1000\n".to_vec();
    let mut rng = Rng::new(0xf00d);
    for m in mutations(&seed, &mut rng, 600) {
        if let Ok(text) = std::str::from_utf8(&m) {
            let _ = ExperimentConfig::parse(text);
        }
    }
}

#[test]
fn dataset_parser_survives_mutations() {
    let samples = vec![
        DistillSample { history: Tensor::zeros(&[5, 4]), target: vec![0.1, 0.2], morphology_id: 0 },
        DistillSample { history: Tensor::full(&[5, 4], 0.5), target: vec![-0.3, 0.4], morphology_id: 1 },
    ];
    let seed = dataset_bytes(&samples, "hopper2d", [3, 2, 4, 2]);
    let mut rng = Rng::new(0xdead);
    for m in mutations(&seed, &mut rng, 400) {
        if let Ok((parsed, env, dims)) = dataset_from_bytes(&m) {
            let bytes = dataset_bytes(&parsed, &env, dims);
            assert!(dataset_from_bytes(&bytes).is_ok());
        }
    }
}
