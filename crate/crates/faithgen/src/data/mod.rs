//! Knowledge-graph data model: triples, linearization, datasets and the
//! tokenization surface shared by sampling, training and evaluation.

mod dataset;
mod graph;
mod vocab;

pub use dataset::{load_dataset, DatasetStats, Split, TextSample};
pub use graph::{linearize, linearize_with_budget, parse_linearized, KGGraph, LinearizedGraph, Triple};
pub use vocab::{
    normalize_text, tokenize_words, Vocabulary, BOS_ID, EOS_ID, HAL_TAG_IDS, PAD_ID, RESERVED, RESERVED_LEN,
    UNK_ID,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSON: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}:{line}: schema violation: {msg}")]
    Schema { path: String, line: usize, msg: String },
    #[error("cannot linearize a graph with no triples")]
    EmptyGraph,
    #[error("linearization parse error at offset {offset}: {msg}")]
    LinearizedParse { offset: usize, msg: String },
    #[error("vocabulary error: {0}")]
    Vocab(String),
}
