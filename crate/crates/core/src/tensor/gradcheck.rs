//! Central finite-difference gradient verification.

use super::param::ParamStore;
use super::tape::{NodeId, Tape};
use super::TensorError;

/// Compare the reverse-mode gradient of a scalar function against central
/// finite differences, coordinate by coordinate over every parameter in the
/// store. Returns the maximum relative error
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
///
/// `f` must bind whichever parameters it uses from the store it is handed
/// and return the scalar loss node; it is re-invoked for every perturbed
/// evaluation, so it has to be a pure function of the store values.
pub fn grad_check<F>(store: &mut ParamStore, h: f64, mut f: F) -> Result<f64, TensorError>
where
    F: FnMut(&mut Tape, &ParamStore) -> NodeId,
{
    assert!(h > 0.0, "step must be positive");

    // analytic gradients
    let mut tape = Tape::new();
    let loss = f(&mut tape, store);
    if tape.value(loss).len() != 1 {
        return Err(TensorError::Config { op: "grad_check", details: "loss must be scalar".into() });
    }
    let grads = tape.backward(loss);
    store.clear_grads();
    tape.accumulate_param_grads(&grads, store);
    let analytic: Vec<Vec<f64>> = store
        .ids()
        .map(|id| match store.grad(id) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; store.value(id).len()],
        })
        .collect();
    store.clear_grads();

    let mut eval = |store: &ParamStore| -> f64 {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store);
        tape.value(loss).item()
    };

    let mut max_rel: f64 = 0.0;
    for (pi, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
        for coord in 0..store.value(id).len() {
            let orig = store.value(id).data()[coord];

            let mut plus = store.value(id).clone();
            plus.data_mut()[coord] = orig + h;
            store.set_value(id, plus)?;
            let fp = eval(store);

            let mut minus = store.value(id).clone();
            minus.data_mut()[coord] = orig - h;
            store.set_value(id, minus)?;
            let fm = eval(store);

            let mut back = store.value(id).clone();
            back.data_mut()[coord] = orig;
            store.set_value(id, back)?;

            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[pi][coord];
            let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_function_is_exact() {
        // f = 3 a + 0.25 b  — central differences are exact for linear maps
        let mut store = ParamStore::new();
        store.insert("a", Tensor::vector(vec![0.7])).unwrap();
        store.insert("b", Tensor::vector(vec![-0.2, 0.4])).unwrap();
        let err = grad_check(&mut store, 1e-3, |tape, store| {
            let a = tape.param(store, store.id("a").unwrap());
            let b = tape.param(store, store.id("b").unwrap());
            let a3 = tape.scale(a, 3.0);
            let bs = tape.sum_all(b);
            let bq = tape.scale(bs, 0.25);
            let asum = tape.sum_all(a3);
            tape.add(asum, bq)
        })
        .unwrap();
        assert!(err < 1e-10, "max rel err {err}");
    }

    #[test]
    fn nonlinear_composite_passes() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::vector(vec![0.3, -0.8, 1.2])).unwrap();
        let err = grad_check(&mut store, 1e-5, |tape, store| {
            let x = tape.param(store, store.id("x").unwrap());
            let t = tape.tanh(x);
            let e = tape.exp(t);
            let m = tape.mul(e, t);
            tape.sum_all(m)
        })
        .unwrap();
        assert!(err < 1e-9, "max rel err {err}");
    }
}
