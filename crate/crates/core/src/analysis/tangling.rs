//! Trajectory tangling: `Q(t) = max_{t'} |xd_t - xd_{t'}|^2 / (|x_t - x_{t'}|^2 + eps)`.
//!
//! High values mean nearby states move in dissimilar directions. Derivatives
//! are backward differences over the sampling interval; the inner maximum
//! runs over every other time index in ascending order (ties keep the first
//! maximum), which pins the exact arithmetic for reference comparisons.

/// Tangling of a pre-differentiated trajectory: `points[t]` and `derivs[t]`
/// must align. Returns one value per time index.
pub fn tangling_from_derivatives(points: &[Vec<f64>], derivs: &[Vec<f64>], eps: f64) -> Vec<f64> {
    assert_eq!(points.len(), derivs.len());
    assert!(points.len() >= 2, "tangling needs at least two samples");
    let n = points.len();
    let mut q = vec![0.0; n];
    for t in 0..n {
        let mut best = 0.0f64;
        for t2 in 0..n {
            if t2 == t {
                continue;
            }
            let num = sq_dist(&derivs[t], &derivs[t2]);
            let den = sq_dist(&points[t], &points[t2]) + eps;
            let ratio = num / den;
            if ratio > best {
                best = ratio;
            }
        }
        q[t] = best;
    }
    q
}

/// Tangling of a raw `T x D` trajectory sampled every `dt`: backward
/// differences define the derivative, so `Q` exists from the second sample
/// on (the returned vector has `T - 1` entries).
pub fn tangling_q(trajectory: &[Vec<f64>], dt: f64, eps: f64) -> Vec<f64> {
    assert!(trajectory.len() >= 3, "tangling needs at least three samples");
    assert!(eps >= 0.0 && dt > 0.0);
    let points: Vec<Vec<f64>> = trajectory[1..].to_vec();
    let derivs: Vec<Vec<f64>> = trajectory
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) / dt).collect())
        .collect();
    tangling_from_derivatives(&points, &derivs, eps)
}

/// The variance-scaled regularizer used for cross-signal comparisons:
/// `0.1 x` mean squared norm of the centered trajectory.
pub fn variance_scaled_eps(trajectory: &[Vec<f64>]) -> f64 {
    let n = trajectory.len();
    let d = trajectory[0].len();
    let mut mean = vec![0.0; d];
    for p in trajectory {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let ms: f64 = trajectory
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    0.1 * ms
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_velocity_lines_have_zero_tangling() {
        // 0.25 and -0.125 are exact in binary, so the differences cancel exactly
        let traj: Vec<Vec<f64>> = (0..50).map(|t| vec![0.25 * t as f64, -0.125 * t as f64]).collect();
        let q = tangling_q(&traj, 0.1, 1e-3);
        assert_eq!(q.len(), 49);
        assert!(q.iter().all(|&v| v == 0.0), "all derivative differences vanish");
    }

    #[test]
    fn two_point_hand_example() {
        // x = (0), (1) with derivatives (1), (-1), eps = 0:
        // Q(0) = |1 - (-1)|^2 / |0 - 1|^2 = 4
        let points = vec![vec![0.0], vec![1.0]];
        let derivs = vec![vec![1.0], vec![-1.0]];
        let q = tangling_from_derivatives(&points, &derivs, 0.0);
        assert_eq!(q, vec![4.0, 4.0]);
    }

    #[test]
    fn figure_eight_is_more_tangled_than_a_circle() {
        // at the crossing of the eight, equal positions carry different
        // velocities, which is exactly what Q detects
        let n = 200;
        let dt = std::f64::consts::TAU / n as f64;
        let circle: Vec<Vec<f64>> = (0..n).map(|i| {
            let t = i as f64 * dt;
            vec![t.cos(), t.sin()]
        }).collect();
        let eight: Vec<Vec<f64>> = (0..n).map(|i| {
            let t = i as f64 * dt;
            vec![t.sin(), (2.0 * t).sin() / 2.0]
        }).collect();
        let eps = 1e-3;
        let qc = tangling_q(&circle, dt, eps);
        let qe = tangling_q(&eight, dt, eps);
        let max_c = qc.iter().cloned().fold(f64::MIN, f64::max);
        let max_e = qe.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max_e > max_c, "figure eight {max_e} should exceed circle {max_c}");
    }

    #[test]
    fn scaling_trajectory_and_eps_together_leaves_q_unchanged() {
        let traj: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.2;
                vec![t.sin(), (1.7 * t).cos(), 0.2 * t]
            })
            .collect();
        let eps = 0.05;
        let q1 = tangling_q(&traj, 0.2, eps);
        let s = 3.7;
        let scaled: Vec<Vec<f64>> = traj.iter().map(|p| p.iter().map(|v| s * v).collect()).collect();
        let q2 = tangling_q(&scaled, 0.2, eps * s * s);
        for (a, b) in q1.iter().zip(&q2) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}
