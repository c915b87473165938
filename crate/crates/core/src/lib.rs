//! Knowledge distillation for domain generalization.
//!
//! The crate is organised around the pieces of the training strategy:
//!
//! - [`nn`]: a small dense-network engine with analytic gradients and optimizers.
//! - [`distill`]: temperature distillation, the gradient filter, the teacher gate and
//!   the combined objective, plus the training loop for students and baselines.
//! - [`data`]: a seeded multi-domain synthetic benchmark with label noise injection.
//! - [`rl`]: a mountain-car testbed with configurable gravity, a dueling DQN and
//!   policy distillation.
//! - [`diagnostics`]: cumulative weight distance, domain-leakage mutual information
//!   and confidence histograms.
//! - [`harness`]: experiment configs, orchestration and CSV outputs.

pub mod data;
pub mod diagnostics;
pub mod distill;
mod error;
pub mod harness;
pub mod nn;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
