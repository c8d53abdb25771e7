//! Principal-component embedding of flattened matrix sequences via a Jacobi
//! eigendecomposition of the covariance.

/// PCA result: projected trajectory plus the explained-variance ratios of
/// the returned components (non-increasing).
#[derive(Clone, Debug)]
pub struct PcaEmbedding {
    /// `n x k` projections, `k <= out_dims` (smaller when rank-deficient).
    pub projected: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// `k x d` principal axes (rows), sign-fixed so the largest-magnitude
    /// loading of each axis is positive.
    pub components: Vec<Vec<f64>>,
    /// True when fewer than `out_dims` informative directions existed.
    pub rank_deficient: bool,
}

/// Center the rows of `data` (`n x d`), eigendecompose the covariance and
/// project onto the leading `out_dims` axes.
pub fn embed_pca(data: &[Vec<f64>], out_dims: usize) -> PcaEmbedding {
    let n = data.len();
    assert!(n > out_dims, "need more samples than output dimensions");
    let d = data[0].len();
    assert!(data.iter().all(|r| r.len() == d));

    let mut mean = vec![0.0; d];
    for row in data {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // covariance (d x d)
    let mut cov = vec![0.0; d * d];
    for row in data {
        for i in 0..d {
            let xi = row[i] - mean[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += xi * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }

    let (mut eigvals, mut eigvecs) = jacobi_eigen(&mut cov, d);
    // sort descending
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    eigvals = order.iter().map(|&i| eigvals[i]).collect();
    eigvecs = order.iter().map(|&i| eigvecs[i].clone()).collect();

    let total: f64 = eigvals.iter().map(|&v| v.max(0.0)).sum();
    let tol = eigvals.first().copied().unwrap_or(0.0).max(0.0) * 1e-12;
    let rank = eigvals.iter().take_while(|&&v| v > tol && v > 0.0).count();
    let k = out_dims.min(rank.max(1)).min(d);
    let rank_deficient = k < out_dims;

    let mut components = Vec::with_capacity(k);
    for v in eigvecs.iter().take(k) {
        let mut axis = v.clone();
        // sign convention: the largest-magnitude loading is positive
        let mut arg = 0;
        for (i, x) in axis.iter().enumerate() {
            if x.abs() > axis[arg].abs() {
                arg = i;
            }
        }
        if axis[arg] < 0.0 {
            for x in &mut axis {
                *x = -*x;
            }
        }
        components.push(axis);
    }
    let projected = data
        .iter()
        .map(|row| {
            components
                .iter()
                .map(|axis| row.iter().zip(axis).zip(&mean).map(|((x, a), m)| (x - m) * a).sum())
                .collect()
        })
        .collect();
    let explained_variance = eigvals[..k]
        .iter()
        .map(|&v| if total > 0.0 { v.max(0.0) / total } else { 0.0 })
        .collect();
    PcaEmbedding { projected, explained_variance, components, rank_deficient }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (destroys the
/// input). Returns `(eigenvalues, eigenvectors-as-rows)`.
fn jacobi_eigen(a: &mut [f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                off += a[i * d + j] * a[i * d + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // rotate rows/cols p and q
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vpk = v[p * d + k];
                    let vqk = v[q * d + k];
                    v[p * d + k] = c * vpk - s * vqk;
                    v[q * d + k] = s * vpk + c * vqk;
                }
            }
        }
    }
    let eigvals: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    let eigvecs: Vec<Vec<f64>> = (0..d).map(|i| v[i * d..(i + 1) * d].to_vec()).collect();
    (eigvals, eigvecs)
}
