//! Command-line pipeline: synthetic data, article parsing, dataset and
//! embedding builds, matcher and decision training, evaluation and
//! recommendation. Every command writes a run manifest next to its
//! outputs.

mod commands;
mod manifest;

pub use manifest::{sha256_file, RunManifest};

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{CbowConfig, CorpusError};
use crate::decision::{DecisionConfig, DecisionError, DecisionTrainConfig};
use crate::model::{ModelConfig, ModelError};
use crate::numerics::NumericsError;
use crate::parser::ParserError;
use crate::training::{TrainConfig, TrainingError};

/// Error carrying the process exit code: 2 input, 3 numeric failure,
/// 4 compatibility.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    code: i32,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 3,
        }
    }

    pub fn compat(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 4,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<ParserError> for CliError {
    fn from(e: ParserError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::numeric(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Incompatible(_) => CliError::compat(e.to_string()),
            ModelError::Numeric(_) | ModelError::Numerics(_) => CliError::numeric(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::NonFiniteLoss { .. } => CliError::numeric(e.to_string()),
            TrainingError::Numerics(_) => CliError::numeric(e.to_string()),
            TrainingError::Model(m) => m.into(),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<DecisionError> for CliError {
    fn from(e: DecisionError) -> Self {
        match e {
            DecisionError::NonFiniteLoss { .. } | DecisionError::Numerics(_) => {
                CliError::numeric(e.to_string())
            }
            DecisionError::Model(m) => m.into(),
            _ => CliError::input(e.to_string()),
        }
    }
}

/// On-disk configuration; any flag with the same meaning overrides it.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
    pub cbow: Option<CbowConfig>,
    pub decision: Option<DecisionConfig>,
    pub decision_train: Option<DecisionTrainConfig>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let content = std::fs::read_to_string(p)
                    .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&content)
                    .map_err(|e| CliError::input(format!("bad config {}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Fine,
    CoarseUnion,
    CoarseModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecisionMode {
    Fine,
    Coarse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArticleSource {
    Gold,
    Predicted,
}

#[derive(Parser, Debug)]
#[command(name = "mlmn", version, about = "Fine-grained fact / law-article matching pipeline")]
pub struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus: cases, articles, clause labels, lexicon.
    GenSynthetic {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        cases: usize,
        #[arg(long, default_value_t = 20)]
        articles: usize,
        #[arg(long, default_value_t = 3)]
        keywords_per_article: usize,
        #[arg(long)]
        keyword_pool: Option<usize>,
        #[arg(long, default_value_t = 30)]
        distractor_pool: usize,
    },
    /// Split articles into labeled clauses with the random forest.
    ParseArticles {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Existing forest model (JSON).
        #[arg(long, conflicts_with = "train")]
        forest: Option<PathBuf>,
        /// Labeled-clause JSONL; trains a fresh forest first.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        save_forest: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        trees: usize,
        #[arg(long, default_value_t = 12)]
        max_depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build the vocabulary and the case split from raw data.
    BuildDataset {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
    },
    /// Train CBOW word embeddings over facts and articles.
    TrainEmbeddings {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the matcher and evaluate it on the held-out test split.
    TrainMatcher {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        neg_ratio: Option<usize>,
        /// Whole-paragraph training with fact length 200.
        #[arg(long)]
        coarse: bool,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        fact_length: Option<usize>,
        #[arg(long)]
        article_length: Option<usize>,
    },
    /// Evaluate a checkpoint on a case file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMode::Fine)]
        mode: EvalMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank articles for one fact.
    Recommend {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        fact: String,
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        /// Print every candidate's score, threshold or not.
        #[arg(long)]
        all: bool,
    },
    /// Train the penalty-term classifier.
    TrainDecision {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = DecisionMode::Fine)]
        mode: DecisionMode,
        #[arg(long, value_enum, default_value_t = ArticleSource::Gold)]
        source: ArticleSource,
        /// Matcher checkpoint; required for --source predicted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Evaluate a trained penalty-term classifier.
    EvalDecision {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        parsed: PathBuf,
        #[arg(long, value_enum, default_value_t = DecisionMode::Fine)]
        mode: DecisionMode,
        #[arg(long, value_enum, default_value_t = ArticleSource::Gold)]
        source: ArticleSource,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file_config = FileConfig::load(cli.config.as_ref())?;
    let seed = cli.seed.or(file_config.seed).unwrap_or(0);
    commands::dispatch(cli.command, file_config, seed)
}
