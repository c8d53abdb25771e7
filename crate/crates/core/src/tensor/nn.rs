//! Dense feed-forward building block on top of the tape.

use super::tape::{NodeId, Tape};
use super::TensorError;

/// Hidden-layer nonlinearity of [`mlp_forward`]; the final layer is always
/// linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// Apply a stack of dense layers `x W + b` with the chosen activation on all
/// but the last layer.
///
/// `input` is `[batch, in]`, each layer is `(w: [in, out], b: [out])`.
/// Dimension mismatches are reported as configuration errors.
pub fn mlp_forward(
    tape: &mut Tape,
    input: NodeId,
    layers: &[(NodeId, NodeId)],
    activation: Activation,
) -> Result<NodeId, TensorError> {
    if tape.shape(input).len() != 2 {
        return Err(TensorError::Config {
            op: "mlp_forward",
            details: format!("input must be [batch, features], got {:?}", tape.shape(input)),
        });
    }
    let mut x = input;
    for (li, &(w, b)) in layers.iter().enumerate() {
        let sw = tape.shape(w).to_vec();
        let sb = tape.shape(b).to_vec();
        let width = tape.shape(x)[1];
        if sw.len() != 2 || sb.len() != 1 || sw[1] != sb[0] {
            return Err(TensorError::Config {
                op: "mlp_forward",
                details: format!("layer {li}: w {sw:?} b {sb:?}"),
            });
        }
        if sw[0] != width {
            return Err(TensorError::Config {
                op: "mlp_forward",
                details: format!("layer {li}: input width {width} vs weight {sw:?}"),
            });
        }
        let z = tape.matmul(x, w);
        x = tape.add_bias_rows(z, b);
        if li + 1 < layers.len() {
            x = match activation {
                Activation::Relu => tape.relu(x),
                Activation::Tanh => tape.tanh(x),
            };
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamStore, Tensor};

    #[test]
    fn identity_weights_zero_bias_is_identity() {
        let mut store = ParamStore::new();
        let w = store
            .insert("w", Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap())
            .unwrap();
        let b = store.insert("b", Tensor::zeros(&[2])).unwrap();
        let mut tape = Tape::new();
        let wn = tape.param(&store, w);
        let bn = tape.param(&store, b);
        let x = tape.input(Tensor::new(vec![1, 2], vec![0.3, -1.7]).unwrap());
        let y = mlp_forward(&mut tape, x, &[(wn, bn)], Activation::Relu).unwrap();
        assert_eq!(tape.value(y).data(), &[0.3, -1.7]);
    }

    #[test]
    fn single_relu_layer_hand_value() {
        // w=[[2]], b=[1], x=[3] -> relu(2*3 + 1) = 7
        let mut tape = Tape::new();
        let w = tape.input(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let b = tape.input(Tensor::vector(vec![1.0]));
        let x = tape.input(Tensor::new(vec![1, 1], vec![3.0]).unwrap());
        // a single layer is final, so apply the activation explicitly
        let lin = mlp_forward(&mut tape, x, &[(w, b)], Activation::Relu).unwrap();
        let y = tape.relu(lin);
        assert_eq!(tape.value(y).data(), &[7.0]);
    }

    #[test]
    fn width_mismatch_is_a_configuration_error() {
        let mut tape = Tape::new();
        let w = tape.input(Tensor::zeros(&[3, 2]));
        let b = tape.input(Tensor::zeros(&[2]));
        let x = tape.input(Tensor::zeros(&[1, 2]));
        let err = mlp_forward(&mut tape, x, &[(w, b)], Activation::Relu).unwrap_err();
        assert!(matches!(err, TensorError::Config { .. }));
    }
}
