//! Node encoder, classification heads, training and extraction.

pub mod checkpoint;
mod config;
mod extract;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{Head, TrainConfig};
pub use extract::{argmax, select_values, Extraction, Prediction};
pub use model::{layer_rng, Network, NodeCache};
pub use train::{examples, finetune, fit, prep_params, train, EpochLoss, Example, Model, TrainOutput};
