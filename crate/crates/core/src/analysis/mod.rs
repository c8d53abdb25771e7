//! Attention-map aggregation, low-dimensional embeddings of the attention
//! dynamics and tangling comparisons between attention, observation and
//! action trajectories.

pub mod pca;
pub mod tangling;

pub use pca::{embed_pca, PcaEmbedding};
pub use tangling::{tangling_from_derivatives, tangling_q, variance_scaled_eps};

use crate::policies::AttentionRecord;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no rollout logs supplied")]
    EmptyLogs,
    #[error("attention records are only logged by dmap policies")]
    NoAttention,
    #[error("log too short: {got} steps, need at least {need}")]
    LogTooShort { need: usize, got: usize },
    #[error("log dimensions disagree: {0}")]
    DimMismatch(String),
}

/// Per-step record of one evaluated episode.
#[derive(Clone, Debug)]
pub struct RolloutLog {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// Present iff the policy is dmap-kind.
    pub attention: Option<Vec<AttentionRecord>>,
    pub context: Vec<f64>,
    pub dt: f64,
}

impl RolloutLog {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Elementwise mean of the attention matrix `K` over all steps of all logs.
/// Averaging preserves column stochasticity.
pub fn steady_attention_map(logs: &[RolloutLog]) -> Result<Tensor, AnalysisError> {
    let mut acc: Option<Tensor> = None;
    let mut count = 0usize;
    for log in logs {
        let records = log.attention.as_ref().ok_or(AnalysisError::NoAttention)?;
        for rec in records {
            match &mut acc {
                None => acc = Some(rec.k.clone()),
                Some(sum) => {
                    if sum.shape() != rec.k.shape() {
                        return Err(AnalysisError::DimMismatch(format!(
                            "{:?} vs {:?}",
                            sum.shape(),
                            rec.k.shape()
                        )));
                    }
                    for (s, &v) in sum.data_mut().iter_mut().zip(rec.k.data()) {
                        *s += v;
                    }
                }
            }
            count += 1;
        }
    }
    let mut sum = acc.ok_or(AnalysisError::EmptyLogs)?;
    if count > 1 {
        for v in sum.data_mut() {
            *v /= count as f64;
        }
    }
    Ok(sum)
}

/// Time-averaged tangling of the three signals of one dmap rollout, each
/// regularized by its own variance-scaled epsilon:
/// the flattened attention matrix `K_t`, the flattened observation window
/// `O(t)` and the flattened action window `A(t)` (window length = the
/// policy's history length `T`; trajectories start at `t = T` where the
/// windows are full).
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TanglingComparison {
    pub attention: f64,
    pub observation: f64,
    pub action: f64,
}

pub fn compare_tangling(log: &RolloutLog, window: usize) -> Result<TanglingComparison, AnalysisError> {
    let records = log.attention.as_ref().ok_or(AnalysisError::NoAttention)?;
    let len = log.len();
    if records.len() != len || log.actions.len() != len {
        return Err(AnalysisError::DimMismatch("per-step sequences differ in length".into()));
    }
    if len < window + 2 {
        return Err(AnalysisError::LogTooShort { need: window + 2, got: len });
    }

    let attention_traj: Vec<Vec<f64>> = (window..len).map(|t| records[t].k.data().to_vec()).collect();
    let obs_traj: Vec<Vec<f64>> = (window..len).map(|t| flatten_window(&log.observations, t, window)).collect();
    let act_traj: Vec<Vec<f64>> = (window..len).map(|t| flatten_window(&log.actions, t, window)).collect();

    let q_of = |traj: &[Vec<f64>]| {
        let eps = variance_scaled_eps(traj);
        let q = tangling_q(traj, log.dt, eps);
        q.iter().sum::<f64>() / q.len() as f64
    };
    Ok(TanglingComparison {
        attention: q_of(&attention_traj),
        observation: q_of(&obs_traj),
        action: q_of(&act_traj),
    })
}

/// Channel-major flattening of `seq[t - window .. t]`, matching the layout
/// of the policy's transition window.
fn flatten_window(seq: &[Vec<f64>], t: usize, window: usize) -> Vec<f64> {
    let d = seq[0].len();
    let mut out = vec![0.0; d * window];
    for (col, step) in (t - window..t).enumerate() {
        for row in 0..d {
            out[row * window + col] = seq[step][row];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_with_k(k: Tensor) -> AttentionRecord {
        let (c, a) = (k.shape()[0], k.shape()[1]);
        AttentionRecord { k_tilde: k.clone(), k, v: Tensor::zeros(&[c, 2]), e: Tensor::zeros(&[a, 2]) }
    }

    fn log_with_ks(ks: Vec<Tensor>) -> RolloutLog {
        let n = ks.len();
        RolloutLog {
            observations: (0..n).map(|t| vec![t as f64, 1.0]).collect(),
            actions: (0..n).map(|t| vec![(t as f64).sin()]).collect(),
            attention: Some(ks.into_iter().map(record_with_k).collect()),
            context: vec![0.0; 5],
            dt: 1.0 / 60.0,
        }
    }

    #[test]
    fn constant_k_averages_to_itself_and_two_logs_average_elementwise() {
        let k = Tensor::matrix(&[vec![0.25, 0.5], vec![0.75, 0.5]]).unwrap();
        let logs = vec![log_with_ks(vec![k.clone(), k.clone()])];
        let mean = steady_attention_map(&logs).unwrap();
        assert_eq!(mean, k);

        let k2 = Tensor::matrix(&[vec![0.75, 0.0], vec![0.25, 1.0]]).unwrap();
        let logs = vec![log_with_ks(vec![k.clone()]), log_with_ks(vec![k2.clone()])];
        let mean = steady_attention_map(&logs).unwrap();
        for i in 0..4 {
            let expect = 0.5 * (k.data()[i] + k2.data()[i]);
            assert!((mean.data()[i] - expect).abs() < 1e-15);
        }
        // column sums stay exactly one under averaging
        for j in 0..2 {
            let s: f64 = (0..2).map(|i| mean.at2(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_logs_are_an_error() {
        assert!(matches!(steady_attention_map(&[]), Err(AnalysisError::EmptyLogs)));
    }

    #[test]
    fn identical_signals_give_identical_tangling() {
        // feed the same sequence as K, observations and actions
        let n = 30;
        let seq: Vec<Vec<f64>> = (0..n).map(|t| vec![(t as f64 * 0.3).sin(), (t as f64 * 0.3).cos()]).collect();
        let ks: Vec<Tensor> = seq.iter().map(|v| Tensor::new(vec![2, 1], v.clone()).unwrap()).collect();
        let mut log = log_with_ks(ks);
        log.observations = seq.clone();
        log.actions = seq.clone();
        let window = 4;
        let cmp = compare_tangling(&log, window).unwrap();
        // observation and action trajectories are built identically here,
        // so their time-averaged Q values must agree exactly
        assert!((cmp.observation - cmp.action).abs() < 1e-12);
        assert!(cmp.attention.is_finite() && cmp.attention >= 0.0);
    }

    #[test]
    fn short_logs_are_rejected() {
        let ks: Vec<Tensor> = (0..5).map(|_| Tensor::zeros(&[2, 1])).collect();
        let log = log_with_ks(ks);
        assert!(matches!(compare_tangling(&log, 4), Err(AnalysisError::LogTooShort { .. })));
    }
}
