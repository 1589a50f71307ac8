//! Differentiable primitives: convolution, batch normalization, activations
//! and pooling, each with an explicit backward pass.

mod activation;
mod conv;
mod norm;
mod pool;

pub use activation::{add, relu, relu6, relu6_backward, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvParams, KERNEL};
pub use norm::{
    batch_norm, batch_norm_backward, batch_norm_infer, batch_norm_train, BatchNormCache, BatchNormGrads,
    BatchNormParams, Mode, DEFAULT_EPSILON, DEFAULT_MOMENTUM,
};
pub use pool::{max_pool2, max_pool2_backward};
