//! Answer cache keyed by `(image, text, oracle_id)`.
//!
//! Raw scores are cached, not Yes/No answers, so one cache serves any
//! threshold. When backed by a file, every new entry is appended as one JSON
//! Lines record; loading replays the file and the last record for a key wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::hashing::digest_parts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheRecord {
    pub image: String,
    pub text: String,
    pub oracle_id: String,
    pub score: f64,
}

type Key = [u8; 32];

fn key(image: &str, text: &str, oracle_id: &str) -> Key {
    digest_parts([image.as_bytes(), text.as_bytes(), oracle_id.as_bytes()])
}

#[derive(Default)]
struct Inner {
    scores: HashMap<Key, f64>,
    sink: Option<BufWriter<File>>,
}

#[derive(Default)]
pub struct AnswerCache {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
}

impl AnswerCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if absent) an append-only cache file.
    pub fn open(path: &Path) -> Result<Self, OracleError> {
        let io = |e: std::io::Error| OracleError::Cache(format!("{}: {e}", path.display()));
        let mut scores = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                    OracleError::Cache(format!("{}:{}: {e}", path.display(), n + 1))
                })?;
                scores.insert(key(&r.image, &r.text, &r.oracle_id), r.score);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            inner: Mutex::new(Inner {
                scores,
                sink: Some(BufWriter::new(file)),
            }),
            path: Some(path.to_owned()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, image: &str, text: &str, oracle_id: &str) -> Option<f64> {
        let inner = self.inner.lock().expect("cache lock poisoned");
        inner.scores.get(&key(image, text, oracle_id)).copied()
    }

    pub fn insert(&self, image: &str, text: &str, oracle_id: &str, score: f64) -> Result<(), OracleError> {
        let mut inner = self.inner.lock().expect("cache lock poisoned");
        let k = key(image, text, oracle_id);
        if inner.scores.get(&k) == Some(&score) {
            return Ok(());
        }
        inner.scores.insert(k, score);
        if let Some(sink) = inner.sink.as_mut() {
            let record = CacheRecord {
                image: image.to_owned(),
                text: text.to_owned(),
                oracle_id: oracle_id.to_owned(),
                score,
            };
            let line = serde_json::to_string(&record).expect("cache records serialize");
            writeln!(sink, "{line}")
                .and_then(|_| sink.flush())
                .map_err(|e| OracleError::Cache(e.to_string()))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock poisoned").scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
