//! Dense networks, analytic gradients and optimizers.

pub mod checkpoint;
mod network;
mod optim;
mod softmax;
mod tensor;

pub use network::{grad, Activation, Architecture, Layer, Network, Trace};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState, Schedule};
pub use softmax::{argmax, softmax_temp};
pub(crate) use softmax::{log_softmax, softmax_unchecked};
pub use tensor::{ParamVector, Tensor2D};
