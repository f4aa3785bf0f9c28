//! Corpus ingestion and tokenization: a character vocabulary and a small
//! greedy BPE trainer.

mod bpe;
mod corpus;
mod vocab;

use std::path::PathBuf;

use thiserror::Error;

pub use bpe::bpe_train;
pub use corpus::{ingest_corpus, read_corpus, split_holdout, windows};
pub use vocab::{TokenSequence, Vocab};

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("character {ch:?} at byte {offset} is not in the vocabulary")]
    UnknownChar { ch: char, offset: usize },
    #[error("token id {0} is not in the vocabulary")]
    UnknownId(u32),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("cannot window corpus: {0}")]
    BadWindow(String),
}
