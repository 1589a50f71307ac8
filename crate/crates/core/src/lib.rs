//! Light-weight encoder-decoder CNNs for document image cleanup: network
//! building blocks, the pixel/feature/style training loss, patch pipelines,
//! tiled inference and binarization metrics.

pub mod container;
pub mod data;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod perceptual;
pub mod tensor;
pub mod tiler;
pub mod train;

pub use error::{CheckpointError, Error, Result};
pub use tensor::{ParamTensor, Scalar, Shape4, Tensor4};
