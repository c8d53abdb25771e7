//! Rolling window of the last `T` (state, action) transitions.

use crate::tensor::Tensor;
use std::collections::VecDeque;

/// Channel-major history matrix `H` with `n_s + n_a` rows and `len` columns;
/// row `i` holds channel `i`'s last `len` values oldest-first. Before `len`
/// real transitions exist the missing (oldest) columns are zero.
#[derive(Clone, Debug)]
pub struct TransitionHistory {
    n_s: usize,
    n_a: usize,
    len: usize,
    cols: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl TransitionHistory {
    pub fn new(n_s: usize, n_a: usize, len: usize) -> Self {
        assert!(len > 0);
        TransitionHistory { n_s, n_a, len, cols: VecDeque::with_capacity(len) }
    }

    pub fn window(&self) -> usize {
        self.len
    }

    pub fn channels(&self) -> usize {
        self.n_s + self.n_a
    }

    /// Number of real (non-padded) transitions currently held.
    pub fn real_len(&self) -> usize {
        self.cols.len()
    }

    pub fn clear(&mut self) {
        self.cols.clear();
    }

    /// Record the transition `(s_t, a_t)` after acting.
    pub fn push(&mut self, state: &[f64], action: &[f64]) {
        assert_eq!(state.len(), self.n_s);
        assert_eq!(action.len(), self.n_a);
        if self.cols.len() == self.len {
            self.cols.pop_front();
        }
        self.cols.push_back((state.to_vec(), action.to_vec()));
    }

    /// The most recent action, or zeros before the first transition.
    pub fn prev_action(&self) -> Vec<f64> {
        match self.cols.back() {
            Some((_, a)) => a.clone(),
            None => vec![0.0; self.n_a],
        }
    }

    /// Materialize the `[(n_s + n_a), len]` matrix.
    pub fn as_matrix(&self) -> Tensor {
        let channels = self.channels();
        let mut data = vec![0.0; channels * self.len];
        let pad = self.len - self.cols.len();
        for (j, (s, a)) in self.cols.iter().enumerate() {
            let col = pad + j;
            for (row, &v) in s.iter().enumerate() {
                data[row * self.len + col] = v;
            }
            for (row, &v) in a.iter().enumerate() {
                data[(self.n_s + row) * self.len + col] = v;
            }
        }
        Tensor::new(vec![channels, self.len], data).unwrap()
    }
}
