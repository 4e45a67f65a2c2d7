//! Query ranker: estimates how likely a query's answer is to agree with the
//! credibility of its image-caption pair.

mod encoder;
mod model;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encoder::{EmbeddingRecord, Encoder, FixtureEncoder, RemoteEncoder};
pub use model::{softmax, support_prob, Params, RankerModel, CLASSES};
pub use train::{
    class_index, grad_check, loss, loss_and_gradient, numeric_gradient, predict_class,
    relative_error, train, training_accuracy, Hyperparams, TrainOutcome, TrainSample,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankerError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding dimension and hidden width must be positive")]
    ZeroDimension,
    #[error("embedding vectors must be finite")]
    NonFiniteEmbedding,
    #[error("parameter {name}: expected {expected} values, found {found}")]
    ParameterShape {
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("model parameters must be finite")]
    NonFiniteParameter,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("learning rate must be finite and non-negative, got {0}")]
    InvalidLearningRate(f64),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("non-finite loss {loss} at epoch {epoch}, sample {sample}")]
    NonFiniteLoss { epoch: usize, sample: usize, loss: f64 },
    #[error("encoder: {0}")]
    Encoder(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Query, caption and image embeddings of one (image, caption, query) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTriple {
    pub h_q: Vec<f64>,
    pub h_c: Vec<f64>,
    pub h_v: Vec<f64>,
}

impl EmbeddingTriple {
    /// Dimension of `h_q`; [`EmbeddingTriple::validate`] checks the others.
    pub fn dim(&self) -> usize {
        self.h_q.len()
    }

    pub fn validate(&self) -> Result<(), RankerError> {
        let d = self.h_q.len();
        for v in [&self.h_c, &self.h_v] {
            if v.len() != d {
                return Err(RankerError::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
        }
        if [&self.h_q, &self.h_c, &self.h_v]
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(RankerError::NonFiniteEmbedding);
        }
        Ok(())
    }
}

pub const MODEL_FORMAT: &str = "decontext-ranker";
pub const MODEL_VERSION: u32 = 1;

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRecord {
    pub hyperparams: Hyperparams,
    pub samples: usize,
    pub loss_trace: Vec<f64>,
    pub training_accuracy: f64,
}

/// On-disk weight file. See the README for the field layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub hidden: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingRecord>,
}

impl ModelFile {
    pub fn new(model: &RankerModel) -> Self {
        Self {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            dim: model.dim(),
            hidden: model.hidden(),
            seed: model.seed(),
            config_hash: None,
            params: model.params().clone(),
            training: None,
        }
    }

    pub fn model(&self) -> Result<RankerModel, RankerError> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(RankerError::ModelFile(format!(
                "unsupported format {:?} version {}",
                self.format, self.version
            )));
        }
        RankerModel::from_params(self.dim, self.hidden, self.seed, self.params.clone())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model files serialize");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, RankerError> {
        serde_json::from_str(s).map_err(|e| RankerError::ModelFile(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), RankerError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| RankerError::ModelFile(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RankerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RankerError::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
