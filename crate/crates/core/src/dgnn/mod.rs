//! From-scratch directed graph neural network for intention prediction.

mod checkpoint;
mod gradcheck;
mod linalg;
mod model;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, micro_config, GradCheckReport};
pub use model::{
    dropout_mask, forward_input, model_backward, model_forward, prepare_input, select_class, BlockParams, ForwardCache,
    ModelConfig, ModelParams, Mode, NetInput, N_CLASSES,
};
pub use tensor::Tensor;
pub use train::{
    cross_entropy, loss_and_grad, predict_samples, sample_window, train, train_sequences, window_samples, EpochMetrics,
    SampleRef, Sgd, clip_gradient, TrainConfig,
};
