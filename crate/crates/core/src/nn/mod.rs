//! The binary image classifier: layers, loss, model, training and
//! checkpoints.

pub mod checkpoint;
pub mod layers;
mod loss;
mod model;
mod train;

pub use layers::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool_backward, maxpool_forward,
    relu_backward, relu_forward, ConvGrads, FcGrads, KERNEL, POOL,
};
pub use loss::{softmax_cross_entropy, LossValue, NUM_CLASSES};
pub use model::{
    default_layers, infer_shapes, ArchConfig, Backward, Gradients, LayerSpec, Model, Params,
    Prediction,
};
pub use train::{sgd_step, train, EpochStats, TrainConfig};
