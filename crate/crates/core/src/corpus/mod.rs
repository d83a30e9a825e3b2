//! Forum content model, corpus ingestion and preparation of training data.

mod clean;
mod io;
mod split;
mod types;
mod vocab;

pub use clean::{clean_pairs, filter_pairs, first_reply_pairs, ContentFilter};
pub use io::{
    load_corpus, load_corpus_file, post_line, read_stopwords, response_line, write_corpus, LengthBounds, LoadOptions, LoadReport, Record,
    RejectReason, Rejection,
};
pub use split::{oversample_balance, split_holdout};
pub use types::*;
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus stream unreadable: {0}")]
    Read(#[source] std::io::Error),
    #[error("no texts to build a vocabulary from")]
    EmptyTexts,
    #[error("vocabulary size {0} leaves no room beyond the reserved tokens")]
    VocabTooSmall(usize),
    #[error("class {0:?} has no examples")]
    MissingClass(TopCategory),
    #[error("holdout of {requested} requested but only {available} items")]
    HoldoutTooLarge { requested: usize, available: usize },
}
