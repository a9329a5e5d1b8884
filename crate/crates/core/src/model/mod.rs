//! Bidirectional LSTM encoder, attentional LSTM decoder.

mod infer;
pub mod lstm;
mod network;
pub mod params;

use thiserror::Error;

pub use infer::{decode_batch, decode_step, encode_source, model_forward, EncodedSource, SequenceScore, StepOutput};
pub use lstm::lstm_step;
pub use network::{backward, forward, DecState, Example, ForwardPass, Mode};
pub use params::{Hyper, ModelParams, Tensor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty {0}")]
    EmptySequence(String),
    #[error("token id {id} is outside a vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
}
