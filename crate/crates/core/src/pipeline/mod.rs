//! End-to-end orchestration: stage files, configuration, the five
//! subcommand bodies and the synthetic planted-truth generator.

mod config;
mod records;
mod stages;
pub mod synth;

use std::path::Path;

use thiserror::Error;

pub use config::{EncoderConfig, OracleConfig, PipelineConfig, RankerConfig, SourceKind};
pub use records::{
    read_jsonl, read_stage, write_jsonl, AnswerItem, AnswersRecord, Dataset, QueriesRecord, Sample,
    SampleFailure, Split, StageHeader, StageWriter, FORMAT_VERSION,
};
pub use stages::{
    open_backend, open_cache, open_encoder, run_answer, run_evaluate, run_extract, run_train,
    EvaluateInputs, EvaluateSummary, MetricsFile, StageOutcome, TrainSummary,
};

use crate::metrics::MetricsError;
use crate::oracle::OracleError;
use crate::ranker::RankerError;
use crate::verdict::VerdictError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("stage file: {0}")]
    StageFile(String),
    #[error("{file} was produced with config hash {found}, expected {expected}")]
    HashMismatch {
        file: String,
        expected: String,
        found: String,
    },
    #[error("samples without labels in a labelled split: {0:?}")]
    MissingLabels(Vec<String>),
    #[error("no usable samples in split {0:?}")]
    NoSamples(Split),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Ranker(#[from] RankerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Verdict(#[from] VerdictError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
