//! Network building blocks: dense layers, ReLU stacks and the temporal
//! convolution encoder. Layers hold [`ParamId`]s into a [`ParamStore`] and
//! can either initialize fresh parameters or resolve existing ones by name
//! (checkpoint loading re-binds the same architecture onto restored values).

use crate::rng::Rng;
use crate::tensor::{NodeId, ParamId, ParamStore, Tape, Tensor};

use super::PolicyError;

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization.
fn uniform_init(rng: &mut Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.uniform_range(-bound, bound)).collect()
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn init(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Linear {
        let w = Tensor::new(vec![in_dim, out_dim], uniform_init(rng, in_dim, in_dim * out_dim)).unwrap();
        let b = Tensor::new(vec![out_dim], uniform_init(rng, in_dim, out_dim)).unwrap();
        Linear {
            w: store.insert(&format!("{name}/w"), w).expect("unique layer name"),
            b: store.insert(&format!("{name}/b"), b).expect("unique layer name"),
            in_dim,
            out_dim,
        }
    }

    /// Bind to already-present parameters, verifying shapes.
    pub fn resolve(store: &ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Linear, PolicyError> {
        let w = store
            .id(&format!("{name}/w"))
            .ok_or_else(|| PolicyError::MissingParam(format!("{name}/w")))?;
        let b = store
            .id(&format!("{name}/b"))
            .ok_or_else(|| PolicyError::MissingParam(format!("{name}/b")))?;
        if store.value(w).shape() != [in_dim, out_dim] || store.value(b).shape() != [out_dim] {
            return Err(PolicyError::ParamShape {
                name: name.to_string(),
                detail: format!(
                    "want [{in_dim},{out_dim}]/[{out_dim}], got {:?}/{:?}",
                    store.value(w).shape(),
                    store.value(b).shape()
                ),
            });
        }
        Ok(Linear { w, b, in_dim, out_dim })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId, trainable: bool) -> NodeId {
        self.forward_act(tape, store, x, trainable, false)
    }

    /// Optionally fuse the ReLU into the layer node.
    pub fn forward_act(&self, tape: &mut Tape, store: &ParamStore, x: NodeId, trainable: bool, relu: bool) -> NodeId {
        let w = if trainable { tape.param(store, self.w) } else { tape.frozen_param(store, self.w) };
        let b = if trainable { tape.param(store, self.b) } else { tape.frozen_param(store, self.b) };
        tape.linear(x, w, b, relu)
    }
}

/// Dense stack with ReLU after every layer.
#[derive(Clone, Debug)]
pub struct ReluStack {
    pub layers: Vec<Linear>,
}

impl ReluStack {
    pub fn init(store: &mut ParamStore, name: &str, in_dim: usize, hiddens: &[usize], rng: &mut Rng) -> ReluStack {
        let mut layers = Vec::with_capacity(hiddens.len());
        let mut width = in_dim;
        for (i, &h) in hiddens.iter().enumerate() {
            layers.push(Linear::init(store, &format!("{name}/{i}"), width, h, rng));
            width = h;
        }
        ReluStack { layers }
    }

    pub fn resolve(store: &ParamStore, name: &str, in_dim: usize, hiddens: &[usize]) -> Result<ReluStack, PolicyError> {
        let mut layers = Vec::with_capacity(hiddens.len());
        let mut width = in_dim;
        for (i, &h) in hiddens.iter().enumerate() {
            layers.push(Linear::resolve(store, &format!("{name}/{i}"), width, h)?);
            width = h;
        }
        Ok(ReluStack { layers })
    }

    pub fn out_dim(&self, in_dim: usize) -> usize {
        self.layers.last().map_or(in_dim, |l| l.out_dim)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: NodeId, trainable: bool) -> NodeId {
        for layer in &self.layers {
            x = layer.forward_act(tape, store, x, trainable, true);
        }
        x
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv1dLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1dLayer {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Conv1dLayer {
        let fan_in = c_in * kernel;
        let w = Tensor::new(vec![c_out, c_in, kernel], uniform_init(rng, fan_in, c_out * c_in * kernel)).unwrap();
        let b = Tensor::new(vec![c_out], uniform_init(rng, fan_in, c_out)).unwrap();
        Conv1dLayer {
            w: store.insert(&format!("{name}/w"), w).expect("unique conv name"),
            b: store.insert(&format!("{name}/b"), b).expect("unique conv name"),
            c_in,
            c_out,
            kernel,
            stride,
        }
    }

    pub fn resolve(
        store: &ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Conv1dLayer, PolicyError> {
        let w = store
            .id(&format!("{name}/w"))
            .ok_or_else(|| PolicyError::MissingParam(format!("{name}/w")))?;
        let b = store
            .id(&format!("{name}/b"))
            .ok_or_else(|| PolicyError::MissingParam(format!("{name}/b")))?;
        if store.value(w).shape() != [c_out, c_in, kernel] || store.value(b).shape() != [c_out] {
            return Err(PolicyError::ParamShape {
                name: name.to_string(),
                detail: format!("conv {:?}/{:?}", store.value(w).shape(), store.value(b).shape()),
            });
        }
        Ok(Conv1dLayer { w, b, c_in, c_out, kernel, stride })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId, trainable: bool) -> Result<NodeId, PolicyError> {
        let w = if trainable { tape.param(store, self.w) } else { tape.frozen_param(store, self.w) };
        let b = if trainable { tape.param(store, self.b) } else { tape.frozen_param(store, self.b) };
        Ok(tape.conv1d(x, w, b, self.stride)?)
    }
}

/// Temporal convolution stack (ReLU after every layer).
#[derive(Clone, Debug)]
pub struct Tcn {
    pub layers: Vec<Conv1dLayer>,
}

impl Tcn {
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        filters: &[usize],
        kernels: &[usize],
        strides: &[usize],
        rng: &mut Rng,
    ) -> Tcn {
        assert!(filters.len() == kernels.len() && kernels.len() == strides.len());
        let mut layers = Vec::with_capacity(filters.len());
        let mut c = c_in;
        for i in 0..filters.len() {
            layers.push(Conv1dLayer::init(store, &format!("{name}/{i}"), c, filters[i], kernels[i], strides[i], rng));
            c = filters[i];
        }
        Tcn { layers }
    }

    pub fn resolve(
        store: &ParamStore,
        name: &str,
        c_in: usize,
        filters: &[usize],
        kernels: &[usize],
        strides: &[usize],
    ) -> Result<Tcn, PolicyError> {
        let mut layers = Vec::with_capacity(filters.len());
        let mut c = c_in;
        for i in 0..filters.len() {
            layers.push(Conv1dLayer::resolve(store, &format!("{name}/{i}"), c, filters[i], kernels[i], strides[i])?);
            c = filters[i];
        }
        Ok(Tcn { layers })
    }

    /// `[batch, c_in, len] -> [batch, filters.last(), out_len]`
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: NodeId, trainable: bool) -> Result<NodeId, PolicyError> {
        for layer in &self.layers {
            x = layer.forward(tape, store, x, trainable)?;
            x = tape.relu(x);
        }
        Ok(x)
    }

    /// Output length after the stride chain: `floor((l - k) / s) + 1` per layer.
    pub fn out_len(kernels: &[usize], strides: &[usize], mut len: usize) -> Result<usize, PolicyError> {
        for (&k, &s) in kernels.iter().zip(strides) {
            if len < k {
                return Err(PolicyError::Config(format!(
                    "temporal window of {len} shorter than kernel {k}"
                )));
            }
            len = (len - k) / s + 1;
        }
        Ok(len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_length_chain_matches_the_declared_strides() {
        // 30 -> 7 -> 5 -> 3 for kernels [5,3,3], strides [4,1,1]
        assert_eq!(Tcn::out_len(&[5, 3, 3], &[4, 1, 1], 30).unwrap(), 3);
        let mut l = 30;
        let mut lens = vec![];
        for (&k, &s) in [5usize, 3, 3].iter().zip(&[4usize, 1, 1]) {
            l = (l - k) / s + 1;
            lens.push(l);
        }
        assert_eq!(lens, vec![7, 5, 3]);
        assert!(Tcn::out_len(&[5, 3, 3], &[4, 1, 1], 8).is_err());
    }

    #[test]
    fn zero_weight_linear_maps_everything_to_bias() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1);
        let lin = Linear::init(&mut store, "l", 3, 2, &mut rng);
        store.set_value(lin.w, Tensor::zeros(&[3, 2])).unwrap();
        store.set_value(lin.b, Tensor::vector(vec![0.5, -0.5])).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap());
        let y = lin.forward(&mut tape, &store, x, true);
        assert_eq!(tape.value(y).data(), &[0.5, -0.5, 0.5, -0.5]);
    }
}
