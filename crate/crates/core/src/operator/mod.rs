//! DeepONet surrogate built from scratch: dense networks, exact gradients by
//! backpropagation, a finite-difference oracle, and full-batch training.

mod data;
mod deeponet;
mod dense;
mod train;

pub use data::{InputEncoding, Observation, OperatorDataset};
pub use deeponet::{finite_diff_grad, init_model, Architecture, Checkpoint, DeepONet, Gradient, CHECKPOINT_VERSION};
pub use dense::{Activation, DenseNetwork, Layer};
pub use train::{train, LossHistory, LossRecord, Optimizer, TrainOutcome, TrainingConfig};
