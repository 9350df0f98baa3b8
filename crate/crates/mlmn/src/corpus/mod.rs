//! Corpus model: vocabulary, tokenization, dataset splits, negative
//! sampling, embeddings and synthetic data.

mod data;
mod embedding;
mod synthetic;
mod vocab;

pub use data::{
    encode_and_pad, read_jsonl, sample_negatives, split_dataset, split_facts, split_facts_with,
    write_jsonl, ArticleRecord, Case, CaseRecord, DefaultTokenizer, MatchExample, NegativeScope,
    TokenSequence, Tokenizer,
};
pub use embedding::{train_cbow, CbowConfig, EmbeddingTable};
pub use synthetic::{generate_synthetic, LabeledClause, SyntheticConfig, SyntheticCorpus};
pub use vocab::{Vocabulary, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("split fractions {0}/{1}/{2} do not sum to 1")]
    BadFractions(f64, f64, f64),
    #[error("need at least 3 cases to split, got {0}")]
    TooFewCases(usize),
    #[error("invalid case {case_id}: {reason}")]
    InvalidCase { case_id: String, reason: String },
    #[error("malformed line {line} in {path}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
