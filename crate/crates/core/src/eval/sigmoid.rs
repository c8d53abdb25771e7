//! Least-squares sigmoid fits of reward against perturbation intensity:
//! `r(x) = a + b / (1 + exp((x - c) / d))`.
//!
//! For fixed `(c, d)` the model is linear in `(a, b)`, so the fit grids
//! `(c, d)` over the x-range, solves the 2x2 normal equations per cell and
//! polishes the best start with damped Gauss-Newton over all four
//! parameters.

use super::stats::StatsError;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SigmoidFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub residual_rms: f64,
}

impl SigmoidFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a + self.b / (1.0 + ((x - self.c) / self.d).exp())
    }
}

const MIN_POINTS: usize = 8;

pub fn sigmoid_fit(points: &[(f64, f64)]) -> Result<SigmoidFit, StatsError> {
    if points.len() < MIN_POINTS {
        return Err(StatsError::TooFewPoints { min: MIN_POINTS, got: points.len() });
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if xs.len() < 2 {
        return Err(StatsError::DegenerateRange);
    }
    let x_lo = xs[0];
    let x_hi = *xs.last().unwrap();
    let range = x_hi - x_lo;

    // multi-start grid over the midpoint and the slope scale
    let mut best: Option<(f64, [f64; 4])> = None;
    for ci in 0..=8 {
        let c = x_lo + range * ci as f64 / 8.0;
        for &ds in &[0.02, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let d = (range * ds).max(1e-9);
            let (a, b, sse) = solve_linear(points, c, d);
            let refined = gauss_newton(points, [a, b, c, d]);
            let sse_r = sse_of(points, &refined);
            let candidate = if sse_r < sse { (sse_r, refined) } else { (sse, [a, b, c, d]) };
            if best.map_or(true, |(s, _)| candidate.0 < s) {
                best = Some(candidate);
            }
        }
    }
    let (sse, [a, b, c, d]) = best.expect("grid is non-empty");
    Ok(SigmoidFit { a, b, c, d, residual_rms: (sse / points.len() as f64).sqrt() })
}

fn sigma(x: f64, c: f64, d: f64) -> f64 {
    1.0 / (1.0 + ((x - c) / d).exp())
}

/// Least squares over `(a, b)` at fixed `(c, d)`.
fn solve_linear(points: &[(f64, f64)], c: f64, d: f64) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mut ss = 0.0;
    let mut s1 = 0.0;
    let mut sy = 0.0;
    let mut ssy = 0.0;
    for &(x, y) in points {
        let s = sigma(x, c, d);
        s1 += s;
        ss += s * s;
        sy += y;
        ssy += s * y;
    }
    // normal equations: [n, s1; s1, ss] [a; b] = [sy; ssy]
    let det = n * ss - s1 * s1;
    let (a, b) = if det.abs() < 1e-12 {
        (sy / n, 0.0) // constant sigma column: flat fit
    } else {
        ((sy * ss - s1 * ssy) / det, (n * ssy - s1 * sy) / det)
    };
    let mut sse = 0.0;
    for &(x, y) in points {
        let r = a + b * sigma(x, c, d) - y;
        sse += r * r;
    }
    (a, b, sse)
}

fn sse_of(points: &[(f64, f64)], p: &[f64; 4]) -> f64 {
    let [a, b, c, d] = *p;
    if !d.is_finite() || d.abs() < 1e-12 {
        return f64::INFINITY;
    }
    points
        .iter()
        .map(|&(x, y)| {
            let r = a + b * sigma(x, c, d) - y;
            r * r
        })
        .sum()
}

/// Damped Gauss-Newton over all four parameters.
fn gauss_newton(points: &[(f64, f64)], start: [f64; 4]) -> [f64; 4] {
    let mut p = start;
    let mut lambda = 1e-3;
    let mut sse = sse_of(points, &p);
    for _ in 0..200 {
        let [a, b, c, d] = p;
        // assemble J^T J and J^T r for r_i = model - y
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for &(x, y) in points {
            let s = sigma(x, c, d);
            let u = (x - c) / d;
            let sp = s * (1.0 - s);
            let j = [1.0, s, b * sp / d, b * sp * u / d];
            let r = a + b * s - y;
            for i in 0..4 {
                jtr[i] += j[i] * r;
                for k in 0..4 {
                    jtj[i][k] += j[i] * j[k];
                }
            }
        }
        // Levenberg damping on the diagonal
        let mut m = jtj;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += lambda * (jtj[i][i].max(1e-12));
        }
        let Some(step) = solve4(&m, &jtr) else { break };
        let candidate = [p[0] - step[0], p[1] - step[1], p[2] - step[2], p[3] - step[3]];
        let cand_sse = sse_of(points, &candidate);
        if cand_sse.is_finite() && cand_sse < sse {
            let improvement = sse - cand_sse;
            p = candidate;
            sse = cand_sse;
            lambda = (lambda * 0.5).max(1e-12);
            if improvement < 1e-15 * (1.0 + sse) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    p
}

/// Gaussian elimination with partial pivoting for the 4x4 system.
fn solve4(m: &[[f64; 4]; 4], rhs: &[f64; 4]) -> Option<[f64; 4]> {
    let mut a = *m;
    let mut b = *rhs;
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn synthetic(a: f64, b: f64, c: f64, d: f64, noise_sd: f64, rng: &mut Rng) -> Vec<(f64, f64)> {
        synthetic_n(60, a, b, c, d, noise_sd, rng)
    }

    fn synthetic_n(n: usize, a: f64, b: f64, c: f64, d: f64, noise_sd: f64, rng: &mut Rng) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let x = 1.2 * i as f64 / (n - 1) as f64;
                let y = a + b / (1.0 + ((x - c) / d).exp()) + noise_sd * rng.normal();
                (x, y)
            })
            .collect()
    }

    #[test]
    fn noiseless_parameters_are_recovered_to_1e6_relative() {
        let mut rng = Rng::new(1);
        let points = synthetic(100.0, 900.0, 0.6, 0.15, 0.0, &mut rng);
        let fit = sigmoid_fit(&points).unwrap();
        assert!((fit.a - 100.0).abs() / 100.0 < 1e-6, "a = {}", fit.a);
        assert!((fit.b - 900.0).abs() / 900.0 < 1e-6, "b = {}", fit.b);
        assert!((fit.c - 0.6).abs() / 0.6 < 1e-6, "c = {}", fit.c);
        assert!((fit.d - 0.15).abs() / 0.15 < 1e-6, "d = {}", fit.d);
        assert!(fit.residual_rms < 1e-6);
    }

    #[test]
    fn constant_rewards_give_a_flat_fit() {
        let points: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 / 19.0, 42.0)).collect();
        let fit = sigmoid_fit(&points).unwrap();
        assert!(fit.b.abs() < 1e-6, "b = {}", fit.b);
        assert!((fit.a + fit.b * 0.5 - 42.0).abs() < 1e-6 || (fit.a - 42.0).abs() < 1e-6);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn five_percent_noise_keeps_parameters_within_five_percent() {
        let mut rng = Rng::new(7);
        let points = synthetic_n(600, 100.0, 900.0, 0.6, 0.15, 45.0, &mut rng); // 5% of b
        let fit = sigmoid_fit(&points).unwrap();
        assert!((fit.a - 100.0).abs() / 900.0 < 0.05, "a = {}", fit.a);
        assert!((fit.b - 900.0).abs() / 900.0 < 0.05, "b = {}", fit.b);
        assert!((fit.c - 0.6).abs() / 0.6 < 0.05, "c = {}", fit.c);
        assert!((fit.d - 0.15).abs() / 0.15 < 0.05, "d = {}", fit.d);
    }

    #[test]
    fn too_few_points_and_degenerate_range_are_errors() {
        let few: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 0.0)).collect();
        assert!(matches!(sigmoid_fit(&few), Err(StatsError::TooFewPoints { .. })));
        let flat_x: Vec<(f64, f64)> = (0..10).map(|i| (1.0, i as f64)).collect();
        assert!(matches!(sigmoid_fit(&flat_x), Err(StatsError::DegenerateRange)));
    }
}
