//! The diagnosis predictor: a stacked-GRU encoder over procedures and a
//! stacked-GRU decoder over diagnoses, with optional Luong dot attention.
//!
//! The decoder's first step, fed SOS and initialized from the encoder's
//! final states, yields the distribution over the primary diagnosis that
//! the entropy analyses are built on.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{
    checkpoint_bytes, hex, load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader,
    CorpusBinding, ParamShape, FORMAT_VERSION,
};
pub use model::{Attention, EncodeResult, ModelConfig, Seq2SeqModel, INIT_RANGE};
pub use train::{train, train_with, training_examples, Example, TrainOptions};
