//! Zero-shot evaluation: one deterministic episode per test morphology,
//! IID/OOD tables, paired statistics, sigmoid fits over perturbation
//! intensity, single-limb sweeps and adaptation-speed curves.

pub mod rollout;
pub mod sigmoid;
pub mod stats;

pub use rollout::{run_episode, EpisodeResult};
pub use sigmoid::{sigmoid_fit, SigmoidFit};
pub use stats::{mean, paired_t_test, sample_sd, sem, spearman, StatsError, TTest};
pub use stats::{betainc_reg, gamma_q, ln_gamma};

use serde::{Deserialize, Serialize};

use crate::envs::{testset::TestSet, EnvSpec, MorphologyContext};
use crate::policies::Policy;
use crate::rng::Rng;
use crate::sac::SacError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("checkpoint is for `{ckpt}`, test set is for `{test}`")]
    EnvMismatch { ckpt: String, test: String },
    #[error(transparent)]
    Rollout(#[from] SacError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Env(#[from] crate::envs::EnvError),
}

/// IID when the test cube is inside the training cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistShift {
    Iid,
    Ood,
}

/// Zero-shot evaluation of one checkpoint on one test set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: String,
    pub policy_kind: String,
    pub sigma_train: Option<f64>,
    pub sigma_test: f64,
    /// One episode reward per test morphology, in test-set order.
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub sem: f64,
    /// Known only when `sigma_train` was supplied.
    pub shift: Option<DistShift>,
    /// Euclidean norms of the perturbation vectors (sigmoid-fit x axis).
    pub intensities: Vec<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Evaluate a fixed policy for exactly one deterministic episode per test
/// morphology. Rewards are recorded by the harness only — nothing feeds
/// back into the policy.
pub fn zero_shot_eval(
    policy: &Policy,
    spec: &EnvSpec,
    test_set: &TestSet,
    sigma_train: Option<f64>,
) -> Result<EvalReport, EvalError> {
    if policy.env_name != test_set.env || spec.name != test_set.env {
        return Err(EvalError::EnvMismatch { ckpt: policy.env_name.clone(), test: test_set.env.clone() });
    }
    let mut rewards = Vec::with_capacity(test_set.contexts.len());
    let mut intensities = Vec::with_capacity(test_set.contexts.len());
    for (i, ctx) in test_set.contexts.iter().enumerate() {
        let reset_seed = Rng::stream(test_set.seed, "zero-shot-eval", &[i as u64]).next_u64();
        let episode = rollout::run_episode(policy, spec, ctx, reset_seed, false)?;
        rewards.push(episode.reward);
        intensities.push(ctx.intensity());
    }
    let m = mean(&rewards);
    let s = if rewards.len() > 1 { sem(&rewards) } else { 0.0 };
    Ok(EvalReport {
        env: test_set.env.clone(),
        policy_kind: policy.kind().to_string(),
        sigma_train,
        sigma_test: test_set.sigma,
        shift: sigma_train.map(|st| if test_set.sigma <= st { DistShift::Iid } else { DistShift::Ood }),
        mean: m,
        sem: s,
        rewards,
        intensities,
    })
}

/// One cell of the IID/OOD table: rewards pooled over seeds.
#[derive(Clone, Debug, Serialize)]
pub struct MatrixCell {
    pub policy_kind: String,
    pub sigma_train: f64,
    pub sigma_test: f64,
    pub shift: DistShift,
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
    pub seeds: usize,
}

/// Pool per-seed reports (same train/test cell) into one table cell.
pub fn pool_cell(reports: &[EvalReport]) -> Option<MatrixCell> {
    let first = reports.first()?;
    let sigma_train = first.sigma_train?;
    let mut rewards = Vec::new();
    for r in reports {
        rewards.extend_from_slice(&r.rewards);
    }
    Some(MatrixCell {
        policy_kind: first.policy_kind.clone(),
        sigma_train,
        sigma_test: first.sigma_test,
        shift: if first.sigma_test <= sigma_train { DistShift::Iid } else { DistShift::Ood },
        mean: mean(&rewards),
        sem: if rewards.len() > 1 { sem(&rewards) } else { 0.0 },
        n: rewards.len(),
        seeds: reports.len(),
    })
}

/// Render matrix cells as CSV mirroring the appendix-table layout: one row
/// per (train sigma, test sigma), cells flagged iid/ood. Missing cells stay
/// blank.
pub fn matrix_csv(cells: &[MatrixCell], train_sigmas: &[f64], test_sigmas: &[f64]) -> String {
    use crate::io::csv::{CsvCell, CsvWriter};
    let mut w = CsvWriter::new(&["policy", "sigma_train", "sigma_test", "shift", "mean", "sem", "episodes", "seeds"]);
    for &st in train_sigmas {
        for &te in test_sigmas {
            match cells.iter().find(|c| c.sigma_train == st && c.sigma_test == te) {
                Some(c) => w.row(&[
                    CsvCell::Str(&c.policy_kind),
                    CsvCell::Float(st),
                    CsvCell::Float(te),
                    CsvCell::Str(if c.shift == DistShift::Iid { "iid" } else { "ood" }),
                    CsvCell::Float(c.mean),
                    CsvCell::Float(c.sem),
                    CsvCell::Int(c.n as i64),
                    CsvCell::Int(c.seeds as i64),
                ]),
                None => w.row(&[
                    CsvCell::Empty,
                    CsvCell::Float(st),
                    CsvCell::Float(te),
                    CsvCell::Str(if te <= st { "iid" } else { "ood" }),
                    CsvCell::Empty,
                    CsvCell::Empty,
                    CsvCell::Empty,
                    CsvCell::Empty,
                ]),
            }
        }
    }
    w.finish()
}

/// Reward as a single limb shortens: one deterministic episode per fraction
/// with only that limb's length scaled by `1 - fraction` (clamped at the
/// minimum link length so full amputation stays integrable). Also reports
/// the Spearman rank correlation of reward against fraction.
pub struct LimbSweep {
    pub limb: String,
    pub points: Vec<(f64, f64)>,
    pub spearman_rho: f64,
}

pub fn limb_sweep(
    policy: &Policy,
    spec: &EnvSpec,
    limb_id: usize,
    fractions: &[f64],
    seed: u64,
) -> Result<LimbSweep, EvalError> {
    let label = spec
        .limb_groups
        .get(limb_id)
        .ok_or(crate::envs::EnvError::UnknownLimb(limb_id))?
        .0
        .to_string();
    let nominal = MorphologyContext::nominal(spec.perturbation_dim);
    let mut points = Vec::with_capacity(fractions.len());
    for (i, &f) in fractions.iter().enumerate() {
        let body = spec.single_limb_body(limb_id, 1.0 - f)?;
        let reset_seed = Rng::stream(seed, "limb-sweep", &[i as u64]).next_u64();
        let episode = rollout::run_episode_with_body(policy, spec, &nominal, Some(body), reset_seed, false)?;
        points.push((f, episode.reward));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(LimbSweep { limb: label, points, spearman_rho: spearman(&xs, &ys) })
}

/// Center-of-mass speed against time, smoothed by a trailing mean over
/// `window` steps (earlier steps use the partial window) and averaged over
/// the test morphologies at each step among episodes still running.
pub struct AdaptationCurve {
    /// `(mean smoothed speed, episodes alive)` per step.
    pub curve: Vec<(f64, usize)>,
}

pub fn adaptation_speed(
    policy: &Policy,
    spec: &EnvSpec,
    test_set: &TestSet,
    window: usize,
) -> Result<AdaptationCurve, EvalError> {
    assert!(window >= 1);
    let mut smoothed: Vec<Vec<f64>> = Vec::with_capacity(test_set.contexts.len());
    for (i, ctx) in test_set.contexts.iter().enumerate() {
        let reset_seed = Rng::stream(test_set.seed, "adaptation-speed", &[i as u64]).next_u64();
        let episode = rollout::run_episode(policy, spec, ctx, reset_seed, false)?;
        let mut acc = Vec::with_capacity(episode.speeds.len());
        for (t, _) in episode.speeds.iter().enumerate() {
            let lo = t + 1 - window.min(t + 1);
            let slice = &episode.speeds[lo..=t];
            acc.push(slice.iter().sum::<f64>() / slice.len() as f64);
        }
        smoothed.push(acc);
    }
    let max_len = smoothed.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut curve = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let alive: Vec<f64> = smoothed.iter().filter_map(|s| s.get(t).copied()).collect();
        curve.push((mean(&alive), alive.len()));
    }
    Ok(AdaptationCurve { curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_window_mean_matches_hand_computation() {
        // synthetic constant speed: flat curve at that speed
        let speeds = vec![2.0; 10];
        let window = 3;
        let mut acc = Vec::new();
        for t in 0..speeds.len() {
            let lo = t + 1 - window.min(t + 1);
            let s = &speeds[lo..=t];
            acc.push(s.iter().sum::<f64>() / s.len() as f64);
        }
        assert!(acc.iter().all(|&v| (v - 2.0).abs() < 1e-15));

        // window 1 returns the raw sequence
        let speeds = [1.0, 3.0, 2.0];
        for (t, &s) in speeds.iter().enumerate() {
            let lo = t + 1 - 1;
            assert_eq!(speeds[lo..=t].iter().sum::<f64>() / 1.0, s);
        }
    }

    #[test]
    fn matrix_csv_leaves_missing_cells_blank_and_orders_rows() {
        let cells = vec![MatrixCell {
            policy_kind: "dmap".into(),
            sigma_train: 0.1,
            sigma_test: 0.1,
            shift: DistShift::Iid,
            mean: 100.0,
            sem: 5.0,
            n: 100,
            seeds: 1,
        }];
        let csv = matrix_csv(&cells, &[0.1, 0.3], &[0.1, 0.7]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("dmap,0.1,0.1,iid,100"));
        assert!(lines[2].starts_with(",0.1,0.7,ood,"), "missing cell stays blank: {}", lines[2]);
        assert!(lines[4].contains("0.7,ood"));
    }
}
