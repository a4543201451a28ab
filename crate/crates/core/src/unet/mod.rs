//! A small U-Net with instance normalization, trained by hand-written
//! backpropagation.
//!
//! Each encoder stage applies two `conv3x3 -> instance norm -> ReLU` blocks
//! and a 2x2 max pool; the bottleneck is one more such pair. Each decoder
//! stage upsamples bilinearly by 2, halves the channels with a 3x3
//! convolution, concatenates the matching encoder output and applies
//! another pair of blocks. A 1x1 convolution and a sigmoid produce the
//! output.

mod loss;
mod model;
mod ops;
mod real;

pub use loss::{mse_loss, LossRecord};
pub use model::{build_unet, param_specs, ModelState, UNetConfig};
pub use ops::{conv2d_same, instance_norm2d, ParamTensor, Tensor};
pub use real::Real;
