//! Hand-written layers with explicit forward/backward passes.
//!
//! Layers do not keep activations; the network trace owns them and hands
//! the cached inputs back during the backward pass.

mod conv;
mod ops;
mod optim;
mod param;
mod pool;
mod upconv;

pub use conv::Conv2d;
pub use ops::{dropout_mask, relu_backward, relu_inplace, softmax_backward, softmax_channels};
pub use optim::{Adam, AdamConfig};
pub use param::Param;
pub use pool::{maxpool2x2, maxpool2x2_backward};
pub use upconv::UpConv2x2;
