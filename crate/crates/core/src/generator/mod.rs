//! Response producers: the neural generator and the retrieval baseline.

mod bm25;
mod seq2seq;

pub use bm25::{build_bm25_index, retrieve_response, Bm25Index, Retrieved, DEFAULT_B, DEFAULT_K1};
pub use seq2seq::{train_generator, Decode, GenModel, GeneratorConfig};

use crate::nn::checkpoint::CheckpointError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("no training pairs")]
    EmptyPairs,
    #[error("query has no tokens")]
    QueryEmpty,
    #[error("decoder produced no tokens")]
    GenerationEmpty,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    Generated,
    Retrieved,
}

pub trait Responder: Send + Sync {
    fn respond(&self, post_text: &str) -> Result<(String, ResponseSource), GeneratorError>;
}

impl Responder for GenModel {
    fn respond(&self, post_text: &str) -> Result<(String, ResponseSource), GeneratorError> {
        self.generate(post_text).map(|t| (t, ResponseSource::Generated))
    }
}

impl Responder for Bm25Index {
    fn respond(&self, post_text: &str) -> Result<(String, ResponseSource), GeneratorError> {
        retrieve_response(self, post_text).map(|t| (t, ResponseSource::Retrieved))
    }
}

/// Uses the generator and falls back to retrieval when decoding is empty.
pub struct WithFallback<G> {
    pub primary: G,
    pub fallback: Bm25Index,
}

impl<G: Responder> Responder for WithFallback<G> {
    fn respond(&self, post_text: &str) -> Result<(String, ResponseSource), GeneratorError> {
        match self.primary.respond(post_text) {
            Err(GeneratorError::GenerationEmpty) => {
                log::info!("empty generation, falling back to retrieval");
                self.fallback.respond(post_text)
            }
            other => other,
        }
    }
}
