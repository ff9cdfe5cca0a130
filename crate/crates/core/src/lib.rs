//! Dense neural-network training with class-wise representation regularizers.
//!
//! The crate covers the numeric substrate ([`tensor`]), mini-batch and
//! class-conditional activation statistics ([`stats`]), the covariance and
//! variance penalties with analytical gradients ([`regularizers`]), a
//! feedforward network with backpropagation and optimizers ([`net`],
//! [`optim`], [`train`]), checkpoints, and datasets ([`data`]).

pub mod checkpoint;
pub mod data;
mod error;
pub mod net;
pub mod optim;
pub mod regularizers;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use net::{Batch, Network};
pub use regularizers::{Capture, RegularizerKind, RegularizerSpec, Target};
pub use tensor::Matrix;
