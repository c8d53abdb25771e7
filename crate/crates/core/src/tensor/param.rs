//! Named parameter storage with per-parameter Adam state.

use std::collections::HashMap;

use super::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// One trainable tensor plus its optimizer state.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    m: Tensor,
    v: Tensor,
    step: u64,
}

/// Adam hyperparameters. All constructors validate `0 < beta < 1` and a
/// positive learning rate.
#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self, TensorError> {
        if lr <= 0.0 || !(0.0..1.0).contains(&beta1) || beta1 <= 0.0 || !(0.0..1.0).contains(&beta2) || beta2 <= 0.0 || eps <= 0.0 {
            return Err(TensorError::Config {
                op: "AdamHyper",
                details: format!("lr={lr} beta1={beta1} beta2={beta2} eps={eps}"),
            });
        }
        Ok(AdamHyper { lr, beta1, beta2, eps })
    }

    pub fn with_lr(lr: f64) -> Self {
        AdamHyper::new(lr, 0.9, 0.999, 1e-8).expect("valid lr")
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper::with_lr(3e-4)
    }
}

/// Ordered collection of named parameters. Iteration order is insertion
/// order, which keeps checkpoints and updates deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let shape = value.shape().to_vec();
        let idx = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: None,
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            step: 0,
        });
        self.by_name.insert(name.to_string(), idx);
        Ok(ParamId(idx))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_elems(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    /// Replace a parameter value; the shape must match.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<(), TensorError> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "set_value",
                details: format!("`{}`: {:?} vs {:?}", p.name, p.value.shape(), value.shape()),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id.0].grad.as_ref()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) {
        let p = &mut self.params[id.0];
        debug_assert_eq!(p.value.len(), g.len());
        match &mut p.grad {
            Some(t) => {
                for (gi, &x) in t.data_mut().iter_mut().zip(g) {
                    *gi += x;
                }
            }
            None => {
                p.grad = Some(Tensor { shape: p.value.shape().to_vec(), data: g.to_vec() });
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// One Adam step with bias correction over every parameter; all
    /// gradients must be populated. Gradients are cleared afterwards.
    pub fn adam_step(&mut self, hyper: &AdamHyper) -> Result<(), TensorError> {
        for p in &self.params {
            if p.grad.is_none() {
                return Err(TensorError::MissingGrad(p.name.clone()));
            }
        }
        for p in &mut self.params {
            let g = p.grad.take().expect("checked above");
            p.step += 1;
            let bc1 = 1.0 - hyper.beta1.powi(p.step as i32);
            let bc2 = 1.0 - hyper.beta2.powi(p.step as i32);
            let value = p.value.data_mut();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for i in 0..value.len() {
                let gi = g.data()[i];
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
            }
        }
        Ok(())
    }
}

/// Polyak averaging: `target <- (1 - tau) * target + tau * source`.
/// Both stores must have identical layouts (names and shapes, in order).
pub fn soft_update(target: &mut ParamStore, source: &ParamStore, tau: f64) -> Result<(), TensorError> {
    if target.len() != source.len() {
        return Err(TensorError::ShapeMismatch {
            op: "soft_update",
            details: format!("{} vs {} parameters", target.len(), source.len()),
        });
    }
    for i in 0..target.params.len() {
        let src = &source.params[i];
        let dst = &mut target.params[i];
        if dst.name != src.name || dst.value.shape() != src.value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "soft_update",
                details: format!("`{}` {:?} vs `{}` {:?}", dst.name, dst.value.shape(), src.name, src.value.shape()),
            });
        }
        for (t, &s) in dst.value.data_mut().iter_mut().zip(src.value.data()) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
    Ok(())
}
