//! Toy transformer encoder-decoder with a frozen backbone, a gated side
//! encoder, the training objectives and greedy decoding. All numerics are
//! double precision and differentiated by a small tape.

mod checkpoint;
mod config;
pub mod graph;
mod loss;
pub mod mat;
mod model;
mod params;
mod train;
mod translate;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{ModelConfig, Optimizer};
pub use loss::{est_loss, est_loss_batch, total_loss, Example, LossReport};
pub use mat::Mat;
pub use model::{decoder_input, decoder_output, Forward, Model, Trainable};
pub use params::{Group, ParamStore};
pub use train::{
    batch_gradient, grad_check, learning_rate, train, GradCheckReport, TrainMode, TrainOutcome,
    REL_ERROR_FLOOR,
};
pub use translate::{translate, Memory};

use crate::pnmemory::MemoryError;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
