//! M-x encoder-decoder networks.

mod checkpoint;
mod complexity;
mod network;
mod plan;

pub use checkpoint::{
    config_from_meta, from_container, load_checkpoint, load_checkpoint_as, save_checkpoint, to_container,
};
pub use complexity::{count_mult_adds, count_params, layer_breakdown, param_stats, LayerStats, ParamStats};
pub use network::{ConvLayer, Gradients, Layer, Network, ResidualLayer, TensorKind, Trace};
pub use plan::{
    Activation, LayerPlan, LayerSpec, ModelConfig, Variant, DEFAULT_INPUT_SIZE, INPUT_CHANNELS, RESIDUAL_BLOCKS,
};
