//! A small differentiable classifier: an MLP feature extractor with ReLU
//! activations followed by a linear head over every class of the stream.

mod checkpoint;
mod knn;
mod mlp;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use knn::knn_classify;
pub use mlp::{
    backward, backward_and_step, cross_entropy, cross_entropy_with_grad, forward, sgd_step,
    ForwardTrace, Gradients, Layer, LossGrads, ModelConfig, ModelParams,
};
