//! Transition ring buffer with uniform or proportional-prioritized sampling.
//!
//! Histories are not stored per transition (a 30-column window per entry
//! would dwarf the transition itself); they are reconstructed at sample time
//! by walking back through the ring within the same episode, reproducing the
//! exact zero-padded window the actor saw. If a very long episode wraps the
//! ring, overwritten columns fall back to padding — with the configured
//! capacities (hundreds of episodes) this does not occur.

use crate::rng::Rng;
use crate::tensor::Tensor;

/// One sampled transition, histories materialized on demand.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub context: Vec<f64>,
    /// Window `H(t)` seen when acting at `state`, `[(n_s + n_a), T]`.
    pub history: Option<Tensor>,
    /// Window `H(t+1)` for the bootstrap action at `next_state`.
    pub next_history: Option<Tensor>,
}

struct Stored {
    state: Box<[f64]>,
    action: Box<[f64]>,
    reward: f64,
    next_state: Box<[f64]>,
    done: bool,
    context: Box<[f64]>,
    episode: u64,
}

/// Proportional priorities over ring slots (classic array sum tree).
struct SumTree {
    capacity: usize,
    tree: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        SumTree { capacity, tree: vec![0.0; 2 * capacity.next_power_of_two()] }
    }

    fn leaf_base(&self) -> usize {
        self.capacity.next_power_of_two()
    }

    fn set(&mut self, slot: usize, p: f64) {
        debug_assert!(slot < self.capacity && p >= 0.0);
        let mut i = self.leaf_base() + slot;
        self.tree[i] = p;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    fn get(&self, slot: usize) -> f64 {
        self.tree[self.leaf_base() + slot]
    }

    fn total(&self) -> f64 {
        self.tree[1]
    }

    /// Slot whose cumulative-priority interval contains `u in [0, total)`.
    fn sample(&self, mut u: f64) -> usize {
        let mut i = 1;
        while i < self.leaf_base() {
            let left = self.tree[2 * i];
            if u < left {
                i = 2 * i;
            } else {
                u -= left;
                i = 2 * i + 1;
            }
        }
        (i - self.leaf_base()).min(self.capacity - 1)
    }
}

/// Prioritization knobs (priority exponent and importance-weight exponent).
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        PerConfig { alpha: 0.6, beta_start: 0.4, beta_end: 1.0 }
    }
}

pub struct ReplayBuffer {
    capacity: usize,
    n_s: usize,
    n_a: usize,
    history_len: usize,
    entries: Vec<Stored>,
    /// Total transitions ever pushed; the slot of global index `g` is `g % capacity`.
    head: u64,
    per: Option<PerState>,
}

struct PerState {
    config: PerConfig,
    tree: SumTree,
    max_priority: f64,
}

/// A sampled minibatch: transitions, importance weights (all ones under
/// uniform sampling) and the ring slots for priority updates.
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub weights: Vec<f64>,
    pub slots: Vec<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_s: usize, n_a: usize, history_len: usize, per: Option<PerConfig>) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            n_s,
            n_a,
            history_len,
            entries: Vec::new(),
            head: 0,
            per: per.map(|config| PerState { config, tree: SumTree::new(capacity), max_priority: 1.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_prioritized(&self) -> bool {
        self.per.is_some()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        state: &[f64],
        action: &[f64],
        reward: f64,
        next_state: &[f64],
        done: bool,
        context: &[f64],
        episode: u64,
    ) {
        debug_assert_eq!(state.len(), self.n_s);
        debug_assert_eq!(action.len(), self.n_a);
        let entry = Stored {
            state: state.into(),
            action: action.into(),
            reward,
            next_state: next_state.into(),
            done,
            context: context.into(),
            episode,
        };
        let slot = (self.head % self.capacity as u64) as usize;
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
        } else {
            self.entries[slot] = entry;
        }
        if let Some(per) = &mut self.per {
            // fresh transitions enter at the running maximum priority
            per.tree.set(slot, per.max_priority.powf(per.config.alpha));
        }
        self.head += 1;
    }

    fn oldest_global(&self) -> u64 {
        self.head.saturating_sub(self.capacity as u64)
    }

    /// Rebuild the `[(n_s + n_a), T]` window that the actor saw at global
    /// step `g` (`include_self` appends `(s_g, a_g)` itself, producing the
    /// next-step window).
    fn window(&self, g: u64, include_self: bool) -> Tensor {
        let t = self.history_len;
        let channels = self.n_s + self.n_a;
        let mut data = vec![0.0; channels * t];
        let episode = self.entries[(g % self.capacity as u64) as usize].episode;
        let oldest = self.oldest_global();
        // column t-1 is the latest transition before the acting step
        let back_start = if include_self { 0u64 } else { 1u64 };
        for (offset, col) in (back_start..back_start + t as u64).zip((0..t).rev()) {
            if offset > g {
                break;
            }
            let src = g - offset;
            if src < oldest {
                break;
            }
            let e = &self.entries[(src % self.capacity as u64) as usize];
            if e.episode != episode {
                break;
            }
            for (row, &v) in e.state.iter().enumerate() {
                data[row * t + col] = v;
            }
            for (row, &v) in e.action.iter().enumerate() {
                data[(self.n_s + row) * t + col] = v;
            }
        }
        Tensor::new(vec![channels, t], data).expect("window shape")
    }

    fn materialize(&self, g: u64, with_history: bool) -> Transition {
        let e = &self.entries[(g % self.capacity as u64) as usize];
        Transition {
            state: e.state.to_vec(),
            action: e.action.to_vec(),
            reward: e.reward,
            next_state: e.next_state.to_vec(),
            done: e.done,
            context: e.context.to_vec(),
            history: with_history.then(|| self.window(g, false)),
            next_history: with_history.then(|| self.window(g, true)),
        }
    }

    /// Sample a minibatch. Uniform mode returns unit weights; prioritized
    /// mode samples proportionally to `p^alpha` and returns
    /// `(N * P(i))^-beta` weights normalized by the batch maximum.
    pub fn sample(&self, batch: usize, beta: f64, with_history: bool, rng: &mut Rng) -> SampledBatch {
        assert!(!self.entries.is_empty(), "sampling from an empty buffer");
        let n = self.entries.len();
        let mut transitions = Vec::with_capacity(batch);
        let mut slots = Vec::with_capacity(batch);
        let mut weights = vec![1.0; batch];
        match &self.per {
            None => {
                for _ in 0..batch {
                    let g = self.oldest_global() + rng.below(n) as u64;
                    slots.push((g % self.capacity as u64) as usize);
                    transitions.push(self.materialize(g, with_history));
                }
            }
            Some(per) => {
                let total = per.tree.total();
                debug_assert!(total > 0.0);
                let mut probs = Vec::with_capacity(batch);
                for _ in 0..batch {
                    let u = rng.uniform() * total;
                    let slot = per.tree.sample(u);
                    let g = self.global_of_slot(slot);
                    probs.push(per.tree.get(slot) / total);
                    slots.push(slot);
                    transitions.push(self.materialize(g, with_history));
                }
                let mut max_w = 0.0f64;
                for (w, &p) in weights.iter_mut().zip(&probs) {
                    *w = (n as f64 * p).powf(-beta);
                    max_w = max_w.max(*w);
                }
                for w in &mut weights {
                    *w /= max_w;
                }
            }
        }
        SampledBatch { transitions, weights, slots }
    }

    fn global_of_slot(&self, slot: usize) -> u64 {
        let head_slot = (self.head % self.capacity as u64) as usize;
        // the slot holds the most recent global index congruent to it
        if self.entries.len() < self.capacity || slot < head_slot {
            self.head - head_slot as u64 + slot as u64
        } else {
            self.head - head_slot as u64 - self.capacity as u64 + slot as u64
        }
    }

    /// Set priorities to `|td_error| + 1e-6` for the sampled slots.
    pub fn update_priorities(&mut self, slots: &[usize], td_errors: &[f64]) {
        let Some(per) = &mut self.per else { return };
        for (&slot, &delta) in slots.iter().zip(td_errors) {
            let p = delta.abs() + 1e-6;
            per.max_priority = per.max_priority.max(p);
            per.tree.set(slot, p.powf(per.config.alpha));
        }
    }
}
