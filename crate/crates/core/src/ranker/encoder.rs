//! Query/caption/image encoders. Embeddings are treated as frozen inputs.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingTriple, RankerError};
use crate::oracle::{post_json, CallError, ImageRef, RemoteConfig};

pub trait Encoder: Send + Sync {
    /// Shared embedding dimension of all three vectors.
    fn dim(&self) -> usize;
    fn embed(&self, image: &ImageRef, caption: &str, query: &str) -> Result<EmbeddingTriple, RankerError>;
}

/// One row of an embedding fixture file (JSON Lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub image: String,
    pub caption: String,
    pub query: String,
    pub h_q: Vec<f64>,
    pub h_c: Vec<f64>,
    pub h_v: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct FixtureEncoder {
    dim: usize,
    table: HashMap<(String, String, String), EmbeddingTriple>,
}

impl FixtureEncoder {
    pub fn from_records(records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Self, RankerError> {
        let mut dim = None;
        let mut table = HashMap::new();
        for r in records {
            let triple = EmbeddingTriple {
                h_q: r.h_q,
                h_c: r.h_c,
                h_v: r.h_v,
            };
            triple.validate()?;
            let d = *dim.get_or_insert(triple.dim());
            if triple.dim() != d {
                return Err(RankerError::DimensionMismatch {
                    expected: d,
                    found: triple.dim(),
                });
            }
            table.insert((r.image, r.caption, r.query), triple);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            table,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RankerError> {
        let file = std::fs::File::open(path)
            .map_err(|e| RankerError::Encoder(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| RankerError::Encoder(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| RankerError::Encoder(format!("{}:{}: {e}", path.display(), n + 1)))?,
            );
        }
        Self::from_records(records)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Encoder for FixtureEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &ImageRef, caption: &str, query: &str) -> Result<EmbeddingTriple, RankerError> {
        self.table
            .get(&(image.as_str().to_owned(), caption.to_owned(), query.to_owned()))
            .cloned()
            .ok_or_else(|| RankerError::Encoder(format!("no embedding for image {image}, query {query:?}")))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    image: &'a str,
    caption: &'a str,
    query: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    h_q: Vec<f64>,
    h_c: Vec<f64>,
    h_v: Vec<f64>,
}

/// `POST {"image","caption","query"}` answered by `{"h_q","h_c","h_v"}`.
pub struct RemoteEncoder {
    dim: usize,
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteEncoder {
    pub fn new(dim: usize, config: RemoteConfig) -> Self {
        let agent = config.agent();
        Self { dim, config, agent }
    }
}

impl Encoder for RemoteEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &ImageRef, caption: &str, query: &str) -> Result<EmbeddingTriple, RankerError> {
        let body = EmbedRequest {
            image: image.as_str(),
            caption,
            query,
        };
        let r: EmbedResponse = post_json(&self.agent, &self.config, &body).map_err(|(e, attempts)| {
            let reason = match e {
                CallError::Transport(r) | CallError::Protocol(r) => r,
            };
            RankerError::Encoder(format!("after {attempts} attempt(s): {reason}"))
        })?;
        let triple = EmbeddingTriple {
            h_q: r.h_q,
            h_c: r.h_c,
            h_v: r.h_v,
        };
        triple.validate()?;
        if triple.dim() != self.dim {
            return Err(RankerError::DimensionMismatch {
                expected: self.dim,
                found: triple.dim(),
            });
        }
        Ok(triple)
    }
}
