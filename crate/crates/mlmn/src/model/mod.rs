//! Multi-level matching network: convolutional pattern extraction per
//! level, attention-over-attention alignment, knowledge-aware fusion
//! and a two-way match prediction head.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::Checkpoint;
pub use config::{AoaDirection, CompressOp, ModelConfig, PredictFrom};
pub use forward::{
    aoa_align, extract_patterns, forward, fuse, match_score, recommend, Alignment, ArticleInput,
    Forward, MatchPrediction, MATCH_CLASS,
};
pub use params::{BoundParams, ConvLayer, DenseLayer, ModelParams};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("bad model configuration: {0}")]
    BadConfig(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
