//! A small encoder-decoder transformer with an explicit backward pass.
//!
//! The encoder is unidirectional (each source position attends only to
//! itself and earlier positions), so encoding a prefix `x_1..x_g` gives the
//! same states as encoding the full sentence and hiding positions after `g`.

pub mod checkpoint;
mod config;
pub(crate) mod layers;
mod loss;
mod network;
mod optim;
mod params;
mod tensor;
pub mod train;

pub use config::ModelConfig;
pub use loss::{loss, loss_gradient, smoothed_target_entropy, LossReport};
pub use network::{backward, forward, forward_with_cache, ForwardCache};
pub use optim::{Adam, OptimizerConfig};
pub use params::{
    AttentionParams, DecoderLayerParams, EncoderLayerParams, FeedForwardParams, LayerNormParams,
    ModelParams,
};
pub use tensor::Tensor;
pub use train::{StepReport, TrainConfig, Trainer};
