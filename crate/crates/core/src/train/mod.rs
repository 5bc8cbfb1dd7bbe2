//! Optimisation, checkpoints and the training loop.

mod checkpoint;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use optim::{step_decay_lr, Adam, AdamConfig};
pub use trainer::{gather_grid, new_optimizer, train, train_step, TrainConfig, TrainReport};
