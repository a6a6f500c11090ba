//! Minimal differentiable network engine: convolution/pooling/dense layers
//! with exact gradients, SGD with momentum, the warmup learning-rate
//! schedule, parameter averaging, early stopping, data augmentation, and a
//! binary checkpoint format. Everything is f64 and deterministic.

mod augment;
mod checkpoint;
mod ema;
mod loss;
mod network;
mod optim;
mod schedule;

pub use augment::{augment, flip_horizontal, flip_vertical, AugmentRanges};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use ema::EmaState;
pub use loss::{class_weights, loss_mse, loss_weighted_ce};
pub use network::{ForwardCache, Gradients, Layer, LayerSpec, Network, Shape};
pub use optim::{sgd_step, OptimizerState};
pub use schedule::{lr_at, should_stop, TrainSchedule};
