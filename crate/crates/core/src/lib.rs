//! A desk-scale laboratory for locomotion with a changing body.
//!
//! The crate bundles everything needed to train and dissect policies that
//! keep walking when link lengths and thicknesses are resampled every
//! episode:
//!
//! - [`tensor`] — a minimal dense `f64` tensor library with tape-based
//!   reverse-mode differentiation, the layer kernels the policies need
//!   (dense, 1-d convolution, column softmax, squashed Gaussian heads) and
//!   an Adam optimizer.
//! - [`envs`] — planar hopper / walker link chains with penalty-based ground
//!   contact, whose body parameters are drawn uniformly from a perturbation
//!   cube at every reset.
//! - [`policies`] — the five actor architectures (Simple, Oracle, RMA, TCN,
//!   DMAP) behind one action-selection interface, plus the non-encoding
//!   DMAP ablation.
//! - [`sac`] — a soft actor-critic trainer with twin critics, target
//!   networks, automatic entropy temperature and uniform or prioritized
//!   replay.
//! - [`distill`] — the supervised second phase of RMA: regressing a
//!   temporal-convolution encoder onto a trained Oracle's body encoding.
//! - [`eval`] — the zero-shot evaluation protocol, IID/OOD tables, paired
//!   t-tests, sigmoid fits over perturbation intensity, limb-shortening
//!   sweeps and adaptation-speed curves.
//! - [`analysis`] — attention-map aggregation, PCA embeddings of the
//!   attention dynamics and the trajectory-tangling metric Q.
//! - [`config`] / [`io`] — strict experiment configuration parsing and the
//!   artifact formats (checkpoints, test sets, datasets, CSV/SVG/JSON
//!   reports).
//!
//! Everything is `f64`, single-threaded per training step and fully
//! deterministic under a fixed master seed.

pub mod analysis;
pub mod config;
pub mod distill;
pub mod envs;
pub mod eval;
pub mod io;
pub mod policies;
pub mod rng;
pub mod sac;
pub mod tensor;

pub use tensor::{AdamHyper, ParamStore, Tape, Tensor, TensorError};
