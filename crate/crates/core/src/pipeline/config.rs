//! Pipeline configuration, read from JSON or TOML.
//!
//! Relative paths inside a config file are resolved against the file's
//! directory. Only the settings that change stage outputs feed the config
//! hash; paths, endpoints and concurrency do not.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::hashing::hex_digest;
use crate::oracle::{RemoteConfig, DEFAULT_THRESHOLD};
use crate::ranker::Hyperparams;
use crate::verdict::DEFAULT_K;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Fixture,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub backend: SourceKind,
    pub oracle_id: String,
    pub fixture: Option<PathBuf>,
    pub remote: Option<RemoteConfig>,
    /// Append-only JSON Lines score cache.
    pub cache: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            backend: SourceKind::Fixture,
            oracle_id: "fixture".to_owned(),
            fixture: None,
            remote: None,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub kind: SourceKind,
    pub fixture: Option<PathBuf>,
    pub remote: Option<RemoteConfig>,
    /// Required for remote encoders; fixtures carry their own.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankerConfig {
    /// Hidden width of the mapping network; defaults to the embedding dim.
    pub hidden: Option<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Defaults derive from the global seed.
    pub init_seed: Option<u64>,
    pub shuffle_seed: Option<u64>,
}

impl Default for RankerConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            hidden: None,
            learning_rate: hp.learning_rate,
            epochs: hp.epochs,
            init_seed: None,
            shuffle_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Yes/No threshold on raw oracle scores.
    pub threshold: f64,
    /// Evidence-set size.
    pub k: usize,
    pub max_inflight: usize,
    pub ranker: RankerConfig,
    pub oracle: OracleConfig,
    pub encoder: EncoderConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            k: DEFAULT_K,
            max_inflight: 4,
            ranker: RankerConfig::default(),
            oracle: OracleConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct HashedView<'a> {
    seed: u64,
    threshold: f64,
    k: usize,
    oracle_id: &'a str,
    hidden: Option<usize>,
    learning_rate: f64,
    epochs: usize,
    init_seed: u64,
    shuffle_seed: u64,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let mut config: PipelineConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.oracle.fixture,
            &mut self.oracle.cache,
            &mut self.encoder.fixture,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_owned()));
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.max_inflight == 0 {
            return bad("max_inflight must be at least 1");
        }
        if !(self.ranker.learning_rate.is_finite() && self.ranker.learning_rate >= 0.0) {
            return bad("ranker.learning_rate must be finite and non-negative");
        }
        if self.ranker.hidden == Some(0) {
            return bad("ranker.hidden must be positive");
        }
        if self.oracle.oracle_id.trim().is_empty() {
            return bad("oracle.oracle_id must be non-empty");
        }
        Ok(())
    }

    pub fn init_seed(&self) -> u64 {
        self.ranker.init_seed.unwrap_or(self.seed)
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.ranker.shuffle_seed.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            learning_rate: self.ranker.learning_rate,
            epochs: self.ranker.epochs,
            shuffle_seed: self.shuffle_seed(),
        }
    }

    /// Hex SHA-256 of the output-affecting settings.
    pub fn hash(&self) -> String {
        let view = HashedView {
            seed: self.seed,
            threshold: self.threshold,
            k: self.k,
            oracle_id: &self.oracle.oracle_id,
            hidden: self.ranker.hidden,
            learning_rate: self.ranker.learning_rate,
            epochs: self.ranker.epochs,
            init_seed: self.init_seed(),
            shuffle_seed: self.shuffle_seed(),
        };
        let json = serde_json::to_string(&view).expect("config view serializes");
        hex_digest([json.as_bytes()])
    }
}
