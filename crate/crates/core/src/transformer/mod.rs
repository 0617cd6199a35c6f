//! From-scratch decoder-only transformer with a shared multi-exit head.

mod checkpoint;
mod config;
mod model;
mod ops;
mod params;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, ArrayEntry,
    CheckpointHeader,
};
pub use config::{SubModelLadder, TrainingMode, TransformerConfig};
pub use model::TinyTransformer;
pub use params::{init_params, tensor_shapes, LayerParams, Params};
pub use train::{
    apply_sgd, exit_losses, loss_and_grad, mode_weights, perplexity, sample_batch, sorted_loss,
    train, train_step, train_step_weighted, LossGrad, SgdConfig, TrainOptions,
};
