//! Hot numeric kernels shared by the forward and backward passes.
//!
//! All matrices are row-major. The loop orders are chosen so the inner loops
//! are contiguous axpy/dot patterns that the compiler vectorizes; these
//! kernels dominate training time.

/// c += alpha * x  (len equal)
#[inline]
pub fn axpy(alpha: f64, x: &[f64], c: &mut [f64]) {
    debug_assert_eq!(x.len(), c.len());
    for (ci, xi) in c.iter_mut().zip(x) {
        *ci += alpha * xi;
    }
}

/// Four-accumulator dot product; the split accumulators let the reduction
/// vectorize without reassociating a single serial chain.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let k = 4 * i;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

/// C(m x n) += A(m x k) * B(k x n)
///
/// Accumulates into `c`; pass a zeroed buffer for a plain product. The k
/// loop is unrolled by four so each pass over a C row performs four fused
/// multiply-adds per load/store.
pub fn mm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        let mut kk = 0;
        while kk + 8 <= k {
            let aw: [f64; 8] = a_row[kk..kk + 8].try_into().unwrap();
            if aw == [0.0; 8] {
                kk += 8;
                continue;
            }
            let b0 = &b[kk * n..(kk + 1) * n];
            let b1 = &b[(kk + 1) * n..(kk + 2) * n];
            let b2 = &b[(kk + 2) * n..(kk + 3) * n];
            let b3 = &b[(kk + 3) * n..(kk + 4) * n];
            let b4 = &b[(kk + 4) * n..(kk + 5) * n];
            let b5 = &b[(kk + 5) * n..(kk + 6) * n];
            let b6 = &b[(kk + 6) * n..(kk + 7) * n];
            let b7 = &b[(kk + 7) * n..(kk + 8) * n];
            for j in 0..n {
                let s0 = aw[0] * b0[j] + aw[1] * b1[j];
                let s1 = aw[2] * b2[j] + aw[3] * b3[j];
                let s2 = aw[4] * b4[j] + aw[5] * b5[j];
                let s3 = aw[6] * b6[j] + aw[7] * b7[j];
                c_row[j] += (s0 + s1) + (s2 + s3);
            }
            kk += 8;
        }
        while kk < k {
            let aik = a_row[kk];
            if aik != 0.0 {
                axpy(aik, &b[kk * n..(kk + 1) * n], c_row);
            }
            kk += 1;
        }
    }
}

/// C(m x n) += A(m x k) * B(n x k)^T
///
/// Large operands are routed through a transposed copy of `b` and the
/// [`mm_nn`] kernel; small ones use direct dot products.
pub fn mm_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if m * k * n >= 32_768 {
        let mut bt = vec![0.0; k * n];
        for j in 0..n {
            for t in 0..k {
                bt[t * n + j] = b[j * k + t];
            }
        }
        mm_nn(a, &bt, m, k, n, c);
        return;
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            c_row[j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// C(k x n) += A(m x k)^T * B(m x n)
///
/// Same four-row unrolling as [`mm_nn`], over the shared m axis.
pub fn mm_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    let mut i = 0;
    while i + 4 <= m {
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        let b0 = &b[i * n..(i + 1) * n];
        let b1 = &b[(i + 1) * n..(i + 2) * n];
        let b2 = &b[(i + 2) * n..(i + 3) * n];
        let b3 = &b[(i + 3) * n..(i + 4) * n];
        for kk in 0..k {
            let (w0, w1, w2, w3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
            if w0 == 0.0 && w1 == 0.0 && w2 == 0.0 && w3 == 0.0 {
                continue;
            }
            let c_row = &mut c[kk * n..(kk + 1) * n];
            for j in 0..n {
                c_row[j] += w0 * b0[j] + w1 * b1[j] + w2 * b2[j] + w3 * b3[j];
            }
        }
        i += 4;
    }
    while i < m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, b_row, &mut c[kk * n..(kk + 1) * n]);
            }
        }
        i += 1;
    }
}

/// Above this many multiply-adds the convolution goes through an unrolled
/// im2col buffer and the matmul kernels instead of direct window loops.
const CONV_GEMM_THRESHOLD: usize = 1 << 17;

/// Copy sliding windows into a `[batch * l_out, c_in * kw]` row matrix; the
/// segment order (channel-major, tap-minor) matches the `[c_out, c_in, kw]`
/// weight layout, so convolution becomes `x_col * w^T`.
fn im2col(x: &[f64], batch: usize, c_in: usize, l: usize, kw: usize, stride: usize, l_out: usize) -> Vec<f64> {
    let kdim = c_in * kw;
    let mut x_col = vec![0.0; batch * l_out * kdim];
    for b in 0..batch {
        for t in 0..l_out {
            let row = &mut x_col[(b * l_out + t) * kdim..(b * l_out + t + 1) * kdim];
            for ci in 0..c_in {
                let base = b * c_in * l + ci * l + t * stride;
                row[ci * kw..(ci + 1) * kw].copy_from_slice(&x[base..base + kw]);
            }
        }
    }
    x_col
}

/// Valid 1-d convolution over a batch.
///
/// x: [batch, c_in, l], w: [c_out, c_in, kw], bias: [c_out]
/// y: [batch, c_out, l_out] with l_out = (l - kw) / stride + 1
pub fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    batch: usize,
    c_in: usize,
    l: usize,
    c_out: usize,
    kw: usize,
    stride: usize,
    y: &mut [f64],
) {
    let l_out = (l - kw) / stride + 1;
    debug_assert_eq!(y.len(), batch * c_out * l_out);
    let macs = batch * l_out * c_in * kw * c_out;
    if macs >= CONV_GEMM_THRESHOLD {
        let kdim = c_in * kw;
        let rows = batch * l_out;
        let x_col = im2col(x, batch, c_in, l, kw, stride, l_out);
        let mut y_rows = vec![0.0; rows * c_out];
        for r in 0..rows {
            y_rows[r * c_out..(r + 1) * c_out].copy_from_slice(bias);
        }
        mm_nt_acc(&x_col, w, rows, kdim, c_out, &mut y_rows);
        for b in 0..batch {
            for t in 0..l_out {
                let src = &y_rows[(b * l_out + t) * c_out..(b * l_out + t + 1) * c_out];
                for (co, &v) in src.iter().enumerate() {
                    y[b * c_out * l_out + co * l_out + t] = v;
                }
            }
        }
        return;
    }
    for b in 0..batch {
        let xb = &x[b * c_in * l..(b + 1) * c_in * l];
        let yb = &mut y[b * c_out * l_out..(b + 1) * c_out * l_out];
        for co in 0..c_out {
            let y_row = &mut yb[co * l_out..(co + 1) * l_out];
            y_row.fill(bias[co]);
            let w_co = &w[co * c_in * kw..(co + 1) * c_in * kw];
            for ci in 0..c_in {
                let x_row = &xb[ci * l..(ci + 1) * l];
                let w_row = &w_co[ci * kw..(ci + 1) * kw];
                for (t, yv) in y_row.iter_mut().enumerate() {
                    let x_win = &x_row[t * stride..t * stride + kw];
                    *yv += dot(w_row, x_win);
                }
            }
        }
    }
}

/// Gradients of `conv1d_forward`. Any of the output slices may be empty to
/// skip that gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    batch: usize,
    c_in: usize,
    l: usize,
    c_out: usize,
    kw: usize,
    stride: usize,
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    let l_out = (l - kw) / stride + 1;
    debug_assert_eq!(dy.len(), batch * c_out * l_out);
    let want_dx = !dx.is_empty();
    let want_dw = !dw.is_empty();
    let want_db = !db.is_empty();
    let macs = batch * l_out * c_in * kw * c_out;
    if macs >= CONV_GEMM_THRESHOLD {
        let kdim = c_in * kw;
        let rows = batch * l_out;
        // gather dy into row-major [rows, c_out]
        let mut dy_rows = vec![0.0; rows * c_out];
        for b in 0..batch {
            for co in 0..c_out {
                for t in 0..l_out {
                    dy_rows[(b * l_out + t) * c_out + co] = dy[b * c_out * l_out + co * l_out + t];
                }
            }
        }
        if want_db {
            for r in 0..rows {
                axpy(1.0, &dy_rows[r * c_out..(r + 1) * c_out], db);
            }
        }
        if want_dw {
            let x_col = im2col(x, batch, c_in, l, kw, stride, l_out);
            // dW[c_out, kdim] += dy_rows^T x_col
            mm_tn_acc(&dy_rows, &x_col, rows, c_out, kdim, dw);
        }
        if want_dx {
            // dx_col = dy_rows * w, then scatter-add the windows back
            let mut dx_col = vec![0.0; rows * kdim];
            mm_nn(&dy_rows, w, rows, c_out, kdim, &mut dx_col);
            for b in 0..batch {
                for t in 0..l_out {
                    let row = &dx_col[(b * l_out + t) * kdim..(b * l_out + t + 1) * kdim];
                    for ci in 0..c_in {
                        let base = b * c_in * l + ci * l + t * stride;
                        axpy(1.0, &row[ci * kw..(ci + 1) * kw], &mut dx[base..base + kw]);
                    }
                }
            }
        }
        return;
    }
    for b in 0..batch {
        let xb = &x[b * c_in * l..(b + 1) * c_in * l];
        let dyb = &dy[b * c_out * l_out..(b + 1) * c_out * l_out];
        for co in 0..c_out {
            let dy_row = &dyb[co * l_out..(co + 1) * l_out];
            if want_db {
                db[co] += dy_row.iter().sum::<f64>();
            }
            for ci in 0..c_in {
                let x_row = &xb[ci * l..(ci + 1) * l];
                let w_row = &w[(co * c_in + ci) * kw..(co * c_in + ci + 1) * kw];
                for (t, &g) in dy_row.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let base = t * stride;
                    if want_dw {
                        axpy(g, &x_row[base..base + kw], &mut dw[(co * c_in + ci) * kw..(co * c_in + ci + 1) * kw]);
                    }
                    if want_dx {
                        let dx_row = &mut dx[b * c_in * l + ci * l..b * c_in * l + (ci + 1) * l];
                        axpy(g, w_row, &mut dx_row[base..base + kw]);
                    }
                }
            }
        }
    }
}
