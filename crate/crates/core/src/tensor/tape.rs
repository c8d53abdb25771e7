//! Tape-based reverse-mode differentiation.
//!
//! A `Tape` records one forward pass as a flat list of nodes; `backward`
//! visits them in reverse creation order. Tapes are cheap to build and are
//! thrown away after each training step — no graph reuse, no threading.
//!
//! Shape conventions:
//! - dense layers operate on `[batch, features]`,
//! - convolutions on `[batch, channels, length]`,
//! - the column softmax and the attention product treat `[rows, cols]` as a
//!   single-element batch of `[batch, rows, cols]`.

use super::kernels;
use super::param::{ParamId, ParamStore};
use super::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf { param: Option<ParamId> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MinElem(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Clamp(NodeId, f64, f64),
    MatMul(NodeId, NodeId),
    Linear { x: NodeId, w: NodeId, b: NodeId, relu: bool },
    AddBiasRows(NodeId, NodeId),
    Conv1d { x: NodeId, w: NodeId, b: NodeId, stride: usize },
    SoftmaxCols(NodeId),
    BmmTn(NodeId, NodeId),
    ConcatCols(Vec<NodeId>),
    SelectMid(NodeId, usize),
    Reshape(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    SumRows(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(64) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ---- leaves ----------------------------------------------------------

    /// Constant input: participates in the forward pass only.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, value, false)
    }

    /// Differentiable input that is not a named parameter.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, value, true)
    }

    /// Trainable parameter leaf; its gradient is routed back to the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Leaf { param: Some(id) }, store.value(id).clone(), true)
    }

    /// Parameter used with frozen weights (e.g. critics during the actor
    /// step): no gradient is computed through its weight entries.
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Leaf { param: None }, store.value(id).clone(), false)
    }

    // ---- elementwise -----------------------------------------------------

    fn binary_elementwise(&mut self, op_name: &'static str, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> (Tensor, bool) {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "{op_name}: shape {:?} vs {:?}", ta.shape(), tb.shape());
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor { shape: ta.shape().to_vec(), data };
        (value, self.needs(a) || self.needs(b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (v, g) = self.binary_elementwise("add", a, b, |x, y| x + y);
        self.push(Op::Add(a, b), v, g)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (v, g) = self.binary_elementwise("sub", a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), v, g)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (v, g) = self.binary_elementwise("mul", a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), v, g)
    }

    /// Elementwise minimum; the subgradient routes to `a` on ties.
    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (v, g) = self.binary_elementwise("min_elem", a, b, f64::min);
        self.push(Op::MinElem(a, b), v, g)
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64) -> (Tensor, bool) {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| f(x)).collect();
        (Tensor { shape: ta.shape().to_vec(), data }, self.needs(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let (v, g) = self.unary(a, |x| c * x);
        self.push(Op::Scale(a, c), v, g)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let (v, g) = self.unary(a, |x| x + c);
        self.push(Op::AddScalar(a), v, g)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let (v, g) = self.unary(a, |x| x.max(0.0));
        self.push(Op::Relu(a), v, g)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (v, g) = self.unary(a, f64::tanh);
        self.push(Op::Tanh(a), v, g)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let (v, g) = self.unary(a, f64::exp);
        self.push(Op::Exp(a), v, g)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let (v, g) = self.unary(a, f64::ln);
        self.push(Op::Ln(a), v, g)
    }

    /// Clamp to `[lo, hi]`; gradient passes where the input is inside the
    /// closed interval.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let (v, g) = self.unary(a, |x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v, g)
    }

    // ---- linear algebra ---------------------------------------------------

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa.len(), 2, "matmul lhs must be 2-d, got {sa:?}");
        assert_eq!(sb.len(), 2, "matmul rhs must be 2-d, got {sb:?}");
        assert_eq!(sa[1], sb[0], "matmul inner dims: {sa:?} x {sb:?}");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::mm_nn(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), m, k, n, &mut out);
        let g = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a, b), Tensor { shape: vec![m, n], data: out }, g)
    }

    /// Fused dense layer `relu?(x w + b)`: one output buffer, one backward
    /// dispatch. `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId, relu: bool) -> NodeId {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let sb = self.shape(b).to_vec();
        assert_eq!(sx.len(), 2, "linear input must be [batch, in], got {sx:?}");
        assert!(sw.len() == 2 && sw[0] == sx[1], "linear weight {sw:?} vs input {sx:?}");
        assert_eq!(sb, vec![sw[1]], "linear bias {sb:?} vs weight {sw:?}");
        let (batch, k, n) = (sx[0], sx[1], sw[1]);
        let bias = self.nodes[b.0].value.data();
        let mut out = Vec::with_capacity(batch * n);
        for _ in 0..batch {
            out.extend_from_slice(bias);
        }
        kernels::mm_nn(self.nodes[x.0].value.data(), self.nodes[w.0].value.data(), batch, k, n, &mut out);
        if relu {
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        let g = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(Op::Linear { x, w, b, relu }, Tensor { shape: vec![batch, n], data: out }, g)
    }

    /// `x: [b, n] + bias: [n]`, broadcast over rows.
    pub fn add_bias_rows(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(bias).to_vec());
        assert_eq!(sx.len(), 2, "add_bias_rows input must be 2-d");
        assert_eq!(sb, vec![sx[1]], "bias width {sb:?} vs input {sx:?}");
        let (bsz, n) = (sx[0], sx[1]);
        let mut data = self.nodes[x.0].value.data().to_vec();
        let bv = self.nodes[bias.0].value.data();
        for r in 0..bsz {
            for j in 0..n {
                data[r * n + j] += bv[j];
            }
        }
        let g = self.needs(x) || self.needs(bias);
        self.push(Op::AddBiasRows(x, bias), Tensor { shape: sx, data }, g)
    }

    /// Valid 1-d convolution with per-channel bias.
    ///
    /// `x: [batch, c_in, l]`, `w: [c_out, c_in, kw]`, `b: [c_out]`.
    /// Output length is `(l - kw) / stride + 1`; `l < kw` is a configuration
    /// error.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId, TensorError> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let sb = self.shape(b).to_vec();
        if sx.len() != 3 || sw.len() != 3 || sb.len() != 1 {
            return Err(TensorError::Config {
                op: "conv1d",
                details: format!("want x:[b,c,l] w:[o,c,k] b:[o], got {sx:?} {sw:?} {sb:?}"),
            });
        }
        let (batch, c_in, l) = (sx[0], sx[1], sx[2]);
        let (c_out, kw) = (sw[0], sw[2]);
        if sw[1] != c_in || sb[0] != c_out {
            return Err(TensorError::Config {
                op: "conv1d",
                details: format!("channel mismatch: x {sx:?} w {sw:?} b {sb:?}"),
            });
        }
        if stride == 0 {
            return Err(TensorError::Config { op: "conv1d", details: "stride must be positive".into() });
        }
        if l < kw {
            return Err(TensorError::Config {
                op: "conv1d",
                details: format!("input length {l} shorter than kernel {kw}"),
            });
        }
        let l_out = (l - kw) / stride + 1;
        let mut out = vec![0.0; batch * c_out * l_out];
        kernels::conv1d_forward(
            self.nodes[x.0].value.data(),
            self.nodes[w.0].value.data(),
            self.nodes[b.0].value.data(),
            batch,
            c_in,
            l,
            c_out,
            kw,
            stride,
            &mut out,
        );
        let g = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Conv1d { x, w, b, stride }, Tensor { shape: vec![batch, c_out, l_out], data: out }, g))
    }

    /// Softmax over rows within each column: every column of the output is
    /// non-negative and sums to one. Accepts `[r, c]` or `[batch, r, c]`.
    /// The column max is subtracted before exponentiation for stability.
    pub fn softmax_cols(&mut self, x: NodeId) -> NodeId {
        let sx = self.shape(x).to_vec();
        let (batch, r, c) = match sx.len() {
            2 => (1, sx[0], sx[1]),
            3 => (sx[0], sx[1], sx[2]),
            _ => panic!("softmax_cols wants 2-d or 3-d, got {sx:?}"),
        };
        let mut data = self.nodes[x.0].value.data().to_vec();
        softmax_cols_inplace(&mut data, batch, r, c);
        let g = self.needs(x);
        self.push(Op::SoftmaxCols(x), Tensor { shape: sx, data }, g)
    }

    /// Batched `A^T B`: `a: [batch, r, c1]`, `b: [batch, r, c2]` ->
    /// `[batch, c1, c2]`. 2-d inputs are treated as batch 1.
    pub fn bmm_tn(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (batch, r, c1) = match sa.len() {
            2 => (1, sa[0], sa[1]),
            3 => (sa[0], sa[1], sa[2]),
            _ => panic!("bmm_tn lhs shape {sa:?}"),
        };
        let (batch_b, r_b, c2) = match sb.len() {
            2 => (1, sb[0], sb[1]),
            3 => (sb[0], sb[1], sb[2]),
            _ => panic!("bmm_tn rhs shape {sb:?}"),
        };
        assert_eq!((batch, r), (batch_b, r_b), "bmm_tn: {sa:?} vs {sb:?}");
        let mut out = vec![0.0; batch * c1 * c2];
        for bi in 0..batch {
            kernels::mm_tn_acc(
                &self.nodes[a.0].value.data()[bi * r * c1..(bi + 1) * r * c1],
                &self.nodes[b.0].value.data()[bi * r * c2..(bi + 1) * r * c2],
                r,
                c1,
                c2,
                &mut out[bi * c1 * c2..(bi + 1) * c1 * c2],
            );
        }
        let shape = if sa.len() == 2 && sb.len() == 2 { vec![c1, c2] } else { vec![batch, c1, c2] };
        let g = self.needs(a) || self.needs(b);
        self.push(Op::BmmTn(a, b), Tensor { shape, data: out }, g)
    }

    /// Concatenate `[batch, n_i]` blocks along the feature axis.
    pub fn concat_cols(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "concat_cols of nothing");
        let batch = self.shape(xs[0])[0];
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            assert_eq!(s.len(), 2, "concat_cols wants 2-d blocks, got {s:?}");
            assert_eq!(s[0], batch, "concat_cols batch mismatch");
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; batch * total];
        let mut offset = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let src = self.nodes[x.0].value.data();
            for bi in 0..batch {
                data[bi * total + offset..bi * total + offset + w].copy_from_slice(&src[bi * w..(bi + 1) * w]);
            }
            offset += w;
        }
        let g = xs.iter().any(|&x| self.needs(x));
        self.push(Op::ConcatCols(xs.to_vec()), Tensor { shape: vec![batch, total], data }, g)
    }

    /// Select index `i` along the middle axis of `[batch, a, v]` -> `[batch, v]`.
    pub fn select_mid(&mut self, x: NodeId, i: usize) -> NodeId {
        let sx = self.shape(x).to_vec();
        assert_eq!(sx.len(), 3, "select_mid wants 3-d, got {sx:?}");
        assert!(i < sx[1], "select_mid index {i} out of {}", sx[1]);
        let (batch, a, v) = (sx[0], sx[1], sx[2]);
        let src = self.nodes[x.0].value.data();
        let mut data = vec![0.0; batch * v];
        for bi in 0..batch {
            data[bi * v..(bi + 1) * v].copy_from_slice(&src[(bi * a + i) * v..(bi * a + i) * v + v]);
        }
        let g = self.needs(x);
        self.push(Op::SelectMid(x, i), Tensor { shape: vec![batch, v], data }, g)
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> NodeId {
        let v = self.nodes[x.0].value.clone().reshaped(shape).expect("reshape element count");
        let g = self.needs(x);
        self.push(Op::Reshape(x), v, g)
    }

    // ---- reductions -------------------------------------------------------

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        let g = self.needs(x);
        self.push(Op::SumAll(x), Tensor::scalar(s), g)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x.0].value.len() as f64;
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        let g = self.needs(x);
        self.push(Op::MeanAll(x), Tensor::scalar(s / n), g)
    }

    /// Row sums of `[batch, n] -> [batch]`.
    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        let sx = self.shape(x).to_vec();
        assert_eq!(sx.len(), 2, "sum_rows wants 2-d, got {sx:?}");
        let (batch, n) = (sx[0], sx[1]);
        let src = self.nodes[x.0].value.data();
        let data: Vec<f64> = (0..batch).map(|bi| src[bi * n..(bi + 1) * n].iter().sum()).collect();
        let g = self.needs(x);
        self.push(Op::SumRows(x), Tensor { shape: vec![batch], data }, g)
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse pass from a scalar loss node. Gradients are only materialized
    /// for nodes on a differentiable path.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            self.step_backward(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Gradients { grads }
    }

    fn step_backward(&self, idx: usize, gy: &[f64], grads: &mut Vec<Option<Vec<f64>>>) {
        // local helper: lazily allocate and return the grad buffer of `id`
        macro_rules! grad_of {
            ($id:expr) => {{
                let nid: NodeId = $id;
                if grads[nid.0].is_none() {
                    grads[nid.0] = Some(vec![0.0; self.nodes[nid.0].value.len()]);
                }
                grads[nid.0].as_mut().unwrap()
            }};
        }

        match &self.nodes[idx].op {
            Op::Leaf { .. } => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    kernels::axpy(1.0, gy, grad_of!(*a));
                }
                if self.needs(*b) {
                    kernels::axpy(1.0, gy, grad_of!(*b));
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    kernels::axpy(1.0, gy, grad_of!(*a));
                }
                if self.needs(*b) {
                    kernels::axpy(-1.0, gy, grad_of!(*b));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let vb = self.nodes[b.0].value.data();
                    let ga = grad_of!(*a);
                    for i in 0..gy.len() {
                        ga[i] += gy[i] * vb[i];
                    }
                }
                if self.needs(*b) {
                    let va = self.nodes[a.0].value.data();
                    let gb = grad_of!(*b);
                    for i in 0..gy.len() {
                        gb[i] += gy[i] * va[i];
                    }
                }
            }
            Op::MinElem(a, b) => {
                let va = self.nodes[a.0].value.data();
                let vb = self.nodes[b.0].value.data();
                if self.needs(*a) {
                    let ga = grad_of!(*a);
                    for i in 0..gy.len() {
                        if va[i] <= vb[i] {
                            ga[i] += gy[i];
                        }
                    }
                }
                if self.needs(*b) {
                    let gb = grad_of!(*b);
                    for i in 0..gy.len() {
                        if va[i] > vb[i] {
                            gb[i] += gy[i];
                        }
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    kernels::axpy(*c, gy, grad_of!(*a));
                }
            }
            Op::AddScalar(a) => {
                if self.needs(*a) {
                    kernels::axpy(1.0, gy, grad_of!(*a));
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let va = self.nodes[a.0].value.data();
                    let ga = grad_of!(*a);
                    for i in 0..gy.len() {
                        if va[i] > 0.0 {
                            ga[i] += gy[i];
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let vy = self.nodes[idx].value.data();
                    let ga = grad_of!(*a);
                    for i in 0..gy.len() {
                        ga[i] += gy[i] * (1.0 - vy[i] * vy[i]);
                    }
                }
            }
            Op::Exp(a) => {
                if self.needs(*a) {
                    let vy = self.nodes[idx].value.data();
                    let ga = grad_of!(*a);
                    for i in 0..gy.len() {
                        ga[i] += gy[i] * vy[i];
                    }
                }
            }
            Op::Ln(a) => {
                if self.needs(*a) {
                    let va = self.nodes[a.0].value.data();
                    let ga = grad_of!(*a);
                    for i in 0..gy.len() {
                        ga[i] += gy[i] / va[i];
                    }
                }
            }
            Op::Clamp(a, lo, hi) => {
                if self.needs(*a) {
                    let va = self.nodes[a.0].value.data();
                    let ga = grad_of!(*a);
                    for i in 0..gy.len() {
                        if va[i] >= *lo && va[i] <= *hi {
                            ga[i] += gy[i];
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let sa = self.nodes[a.0].value.shape();
                let sb = self.nodes[b.0].value.shape();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.needs(*a) {
                    let vb = self.nodes[b.0].value.data();
                    kernels::mm_nt_acc(gy, vb, m, n, k, grad_of!(*a));
                }
                if self.needs(*b) {
                    let va = self.nodes[a.0].value.data();
                    kernels::mm_tn_acc(va, gy, m, k, n, grad_of!(*b));
                }
            }
            Op::Linear { x, w, b, relu } => {
                let sx = self.nodes[x.0].value.shape();
                let sw = self.nodes[w.0].value.shape();
                let (batch, k, n) = (sx[0], sx[1], sw[1]);
                // mask the upstream gradient through the relu if fused
                let masked: Vec<f64>;
                let gy_eff: &[f64] = if *relu {
                    let y = self.nodes[idx].value.data();
                    masked = gy.iter().zip(y).map(|(&g, &v)| if v > 0.0 { g } else { 0.0 }).collect();
                    &masked
                } else {
                    gy
                };
                if self.needs(*x) {
                    let vw = self.nodes[w.0].value.data();
                    kernels::mm_nt_acc(gy_eff, vw, batch, n, k, grad_of!(*x));
                }
                if self.needs(*w) {
                    let vx = self.nodes[x.0].value.data();
                    kernels::mm_tn_acc(vx, gy_eff, batch, k, n, grad_of!(*w));
                }
                if self.needs(*b) {
                    let gb = grad_of!(*b);
                    for r in 0..batch {
                        kernels::axpy(1.0, &gy_eff[r * n..(r + 1) * n], gb);
                    }
                }
            }
            Op::AddBiasRows(x, bias) => {
                let sx = self.nodes[x.0].value.shape();
                let (bsz, n) = (sx[0], sx[1]);
                if self.needs(*x) {
                    kernels::axpy(1.0, gy, grad_of!(*x));
                }
                if self.needs(*bias) {
                    let gb = grad_of!(*bias);
                    for r in 0..bsz {
                        kernels::axpy(1.0, &gy[r * n..(r + 1) * n], gb);
                    }
                }
            }
            Op::Conv1d { x, w, b, stride } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let sw = self.nodes[w.0].value.shape().to_vec();
                let (batch, c_in, l) = (sx[0], sx[1], sx[2]);
                let (c_out, kw) = (sw[0], sw[2]);
                let want = (self.needs(*x), self.needs(*w), self.needs(*b));
                // split mutable access: take buffers out, then restore
                let mut dx = if want.0 { std::mem::take(grad_of!(*x)) } else { Vec::new() };
                let mut dw = if want.1 { std::mem::take(grad_of!(*w)) } else { Vec::new() };
                let mut db = if want.2 { std::mem::take(grad_of!(*b)) } else { Vec::new() };
                kernels::conv1d_backward(
                    self.nodes[x.0].value.data(),
                    self.nodes[w.0].value.data(),
                    gy,
                    batch,
                    c_in,
                    l,
                    c_out,
                    kw,
                    *stride,
                    &mut dx,
                    &mut dw,
                    &mut db,
                );
                if want.0 {
                    *grad_of!(*x) = dx;
                }
                if want.1 {
                    *grad_of!(*w) = dw;
                }
                if want.2 {
                    *grad_of!(*b) = db;
                }
            }
            Op::SoftmaxCols(x) => {
                if self.needs(*x) {
                    let sy = self.nodes[idx].value.shape();
                    let (batch, r, c) = match sy.len() {
                        2 => (1, sy[0], sy[1]),
                        _ => (sy[0], sy[1], sy[2]),
                    };
                    let vy = self.nodes[idx].value.data();
                    let gx = grad_of!(*x);
                    for bi in 0..batch {
                        let base = bi * r * c;
                        for j in 0..c {
                            // s = sum_k g_k y_k over the column
                            let mut s = 0.0;
                            for i in 0..r {
                                s += gy[base + i * c + j] * vy[base + i * c + j];
                            }
                            for i in 0..r {
                                let y = vy[base + i * c + j];
                                gx[base + i * c + j] += y * (gy[base + i * c + j] - s);
                            }
                        }
                    }
                }
            }
            Op::BmmTn(a, b) => {
                let sa = self.nodes[a.0].value.shape();
                let (batch, r, c1) = match sa.len() {
                    2 => (1, sa[0], sa[1]),
                    _ => (sa[0], sa[1], sa[2]),
                };
                let c2 = *self.nodes[b.0].value.shape().last().unwrap();
                if self.needs(*a) {
                    let vb = self.nodes[b.0].value.data();
                    let ga = grad_of!(*a);
                    for bi in 0..batch {
                        // dA = B * dY^T
                        kernels::mm_nt_acc(
                            &vb[bi * r * c2..(bi + 1) * r * c2],
                            &gy[bi * c1 * c2..(bi + 1) * c1 * c2],
                            r,
                            c2,
                            c1,
                            &mut ga[bi * r * c1..(bi + 1) * r * c1],
                        );
                    }
                }
                if self.needs(*b) {
                    let va = self.nodes[a.0].value.data();
                    let gb = grad_of!(*b);
                    for bi in 0..batch {
                        // dB = A * dY
                        kernels::mm_nn(
                            &va[bi * r * c1..(bi + 1) * r * c1],
                            &gy[bi * c1 * c2..(bi + 1) * c1 * c2],
                            r,
                            c1,
                            c2,
                            &mut gb[bi * r * c2..(bi + 1) * r * c2],
                        );
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let batch = self.nodes[xs[0].0].value.shape()[0];
                let total: usize = xs.iter().map(|x| self.nodes[x.0].value.shape()[1]).sum();
                let mut offset = 0;
                for &x in xs {
                    let w = self.nodes[x.0].value.shape()[1];
                    if self.needs(x) {
                        let gx = grad_of!(x);
                        for bi in 0..batch {
                            kernels::axpy(1.0, &gy[bi * total + offset..bi * total + offset + w], &mut gx[bi * w..(bi + 1) * w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::SelectMid(x, i) => {
                if self.needs(*x) {
                    let sx = self.nodes[x.0].value.shape();
                    let (batch, a, v) = (sx[0], sx[1], sx[2]);
                    let gx = grad_of!(*x);
                    for bi in 0..batch {
                        kernels::axpy(1.0, &gy[bi * v..(bi + 1) * v], &mut gx[(bi * a + i) * v..(bi * a + i) * v + v]);
                    }
                }
            }
            Op::Reshape(x) => {
                if self.needs(*x) {
                    kernels::axpy(1.0, gy, grad_of!(*x));
                }
            }
            Op::SumAll(x) => {
                if self.needs(*x) {
                    let g = gy[0];
                    for gi in grad_of!(*x).iter_mut() {
                        *gi += g;
                    }
                }
            }
            Op::MeanAll(x) => {
                if self.needs(*x) {
                    let n = self.nodes[x.0].value.len() as f64;
                    let g = gy[0] / n;
                    for gi in grad_of!(*x).iter_mut() {
                        *gi += g;
                    }
                }
            }
            Op::SumRows(x) => {
                if self.needs(*x) {
                    let sx = self.nodes[x.0].value.shape();
                    let (batch, n) = (sx[0], sx[1]);
                    let gx = grad_of!(*x);
                    for bi in 0..batch {
                        let g = gy[bi];
                        for gi in gx[bi * n..(bi + 1) * n].iter_mut() {
                            *gi += g;
                        }
                    }
                }
            }
        }
    }

    /// Add the gradients of all trainable parameter leaves into the store.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(pid) } = node.op {
                if let Some(g) = grads.grads[idx].as_deref() {
                    store.accumulate_grad(pid, g);
                }
            }
        }
    }
}

/// In-place column softmax over `[batch, r, c]` blocks.
pub(crate) fn softmax_cols_inplace(data: &mut [f64], batch: usize, r: usize, c: usize) {
    for bi in 0..batch {
        let block = &mut data[bi * r * c..(bi + 1) * r * c];
        for j in 0..c {
            let mut max = f64::NEG_INFINITY;
            for i in 0..r {
                max = max.max(block[i * c + j]);
            }
            let mut sum = 0.0;
            for i in 0..r {
                let e = (block[i * c + j] - max).exp();
                block[i * c + j] = e;
                sum += e;
            }
            for i in 0..r {
                block[i * c + j] /= sum;
            }
        }
    }
}

/// Column softmax of a 2-d tensor without a tape (logging / analysis path).
pub fn softmax_columns_data(m: &Tensor) -> Tensor {
    assert_eq!(m.shape().len(), 2, "softmax_columns wants a matrix");
    let (r, c) = (m.shape()[0], m.shape()[1]);
    let mut data = m.data().to_vec();
    softmax_cols_inplace(&mut data, 1, r, c);
    Tensor { shape: m.shape().to_vec(), data }
}

/// Squashed-Gaussian action head used by every policy.
///
/// `mean` and `log_std` are `[batch, n]`; `noise`, when given, is a standard
/// normal draw of the same shape. Returns `(action, log_prob)` where the
/// action is `tanh(mean + exp(log_std) * noise)` (or `tanh(mean)` when
/// `deterministic`) and `log_prob` is the per-sample `[batch]` density with
/// the tanh change-of-variables correction `-sum ln(1 - a^2 + 1e-6)`.
/// `log_std` is clamped to `[-20, 2]` first.
pub fn squashed_gaussian(
    tape: &mut Tape,
    mean: NodeId,
    log_std: NodeId,
    noise: Option<&Tensor>,
    deterministic: bool,
) -> (NodeId, NodeId) {
    const LOG_STD_LO: f64 = -20.0;
    const LOG_STD_HI: f64 = 2.0;
    const TANH_EPS: f64 = 1e-6;
    // f64 tanh saturates to exactly 1.0 near |u| ~ 19; keep the action
    // strictly inside the open interval
    const ACTION_BOUND: f64 = 1.0 - 1e-12;

    let shape = tape.shape(mean).to_vec();
    assert_eq!(shape.len(), 2, "squashed_gaussian wants [batch, n]");
    assert_eq!(&shape, tape.shape(log_std), "mean/log_std shape mismatch");
    let (batch, n) = (shape[0], shape[1]);

    let noise_t = match (deterministic, noise) {
        (true, _) | (false, None) => Tensor::zeros(&shape),
        (false, Some(t)) => {
            assert_eq!(t.shape(), &shape[..], "noise shape mismatch");
            t.clone()
        }
    };

    let ls = tape.clamp(log_std, LOG_STD_LO, LOG_STD_HI);
    let std = tape.exp(ls);
    let noise_node = tape.constant(noise_t.clone());
    let scaled = tape.mul(std, noise_node);
    let u = tape.add(mean, scaled);
    let squashed = tape.tanh(u);
    let action = tape.clamp(squashed, -ACTION_BOUND, ACTION_BOUND);

    // Gaussian log-density of the reparameterized draw:
    //   sum_i [ -0.5 ln(2 pi) - log_std_i - 0.5 noise_i^2 ]
    let ls_sums = tape.sum_rows(ls);
    let neg_ls_sums = tape.neg(ls_sums);
    let mut base = vec![0.0; batch];
    for bi in 0..batch {
        let mut s = -(n as f64) * 0.5 * (std::f64::consts::TAU).ln();
        for j in 0..n {
            let z = noise_t.data()[bi * n + j];
            s -= 0.5 * z * z;
        }
        base[bi] = s;
    }
    let base_node = tape.constant(Tensor { shape: vec![batch], data: base });
    let gauss = tape.add(neg_ls_sums, base_node);

    // tanh correction: -sum ln(1 - a^2 + eps)
    let a2 = tape.mul(action, action);
    let neg_a2 = tape.neg(a2);
    let inner = tape.add_scalar(neg_a2, 1.0 + TANH_EPS);
    let ln_inner = tape.ln(inner);
    let corr = tape.sum_rows(ln_inner);
    let neg_corr = tape.neg(corr);
    let log_prob = tape.add(gauss, neg_corr);

    (action, log_prob)
}
