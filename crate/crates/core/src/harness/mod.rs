//! Character-level LM training and the ordering experiments built on it.

pub mod corpus;
pub mod fixtures;
pub mod halves;
pub mod report;
pub mod search;
pub mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use corpus::{bundled_corpus, load_corpus, Corpus, SplitFractions};
pub use halves::{analyze_halves, GroupStats, HalfSplitReport, ScoredOrdering, DEFAULT_THRESHOLD};
pub use report::{render, ReportFormat};
pub use search::{read_results, run_random_search, run_sandwich_sweep, run_search, RunOptions, SearchConfig, SearchHeader, SearchMode};
pub use train::{evaluate, nats_to_bpc, nats_to_ppl, train, train_model, CurvePoint, RecordMeta, TrainConfig, TrialRecord};

use crate::model::ModelError;
use crate::ordering::OrderingError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("split fractions {0:?} must be non-negative and sum to 1")]
    BadFractions(SplitFractions),
    #[error("stream of length {0} is too short")]
    StreamTooShort(usize),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{0}: results file was written by a different config")]
    ConfigMismatch(PathBuf),
    #[error("{0}: corrupt results file: {1}")]
    CorruptResults(PathBuf, String),
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("unknown report format {0:?} (expected csv, markdown or svg)")]
    UnknownFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ordering(#[from] OrderingError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<crate::tensor::TensorError> for HarnessError {
    fn from(e: crate::tensor::TensorError) -> Self {
        HarnessError::Model(e.into())
    }
}
