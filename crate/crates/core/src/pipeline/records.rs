//! Dataset records and the JSON Lines stage files exchanged between
//! subcommands.
//!
//! Stage files start with a [`StageHeader`] line naming the stage and the
//! config hash that produced them; every later line is one record.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::extraction::Query;
use crate::graph::AmrGraph;
use crate::label::PairLabel;
use crate::oracle::{ImageRef, QueryAnswer};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(PipelineError::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One image-caption pair with its annotated caption graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub caption: String,
    pub image: ImageRef,
    pub graph: AmrGraph,
    #[serde(default)]
    pub label: Option<PairLabel>,
    pub split: Split,
}

impl Sample {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty sample id".to_owned());
        }
        if self.graph.caption() != self.caption {
            return Err(format!(
                "graph caption {:?} differs from sample caption {:?}",
                self.graph.caption(),
                self.caption
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    /// Sample id, or `line N` when the record could not be parsed.
    pub sample: String,
    pub reason: String,
}

/// Per-line outcome of reading a dataset.
#[derive(Debug, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub failures: Vec<SampleFailure>,
}

impl Dataset {
    /// Reads a dataset; malformed or invalid lines become failures.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
        let mut out = Dataset::default();
        let mut ids = std::collections::HashSet::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| PipelineError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<Sample>(&line)
                .map_err(|e| e.to_string())
                .and_then(|s| s.validate().map(|_| s));
            match parsed {
                Ok(s) if !ids.insert(s.id.clone()) => out.failures.push(SampleFailure {
                    sample: s.id,
                    reason: "duplicate sample id".to_owned(),
                }),
                Ok(s) => out.samples.push(s),
                Err(reason) => {
                    log::warn!(target: "decontext::dataset", "{}:{}: {}", path.display(), n + 1, reason);
                    out.failures.push(SampleFailure {
                        sample: format!("line {}", n + 1),
                        reason,
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageHeader {
    pub stage: String,
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueriesRecord {
    pub id: String,
    pub image: ImageRef,
    pub caption: String,
    pub queries: Vec<Query>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerItem {
    pub query: Query,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<QueryAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswersRecord {
    pub id: String,
    pub image: ImageRef,
    pub caption: String,
    pub answers: Vec<AnswerItem>,
}

impl AnswersRecord {
    /// All answers, or the first per-item error.
    pub fn complete(&self) -> Result<Vec<(&Query, &QueryAnswer)>, String> {
        self.answers
            .iter()
            .map(|item| match (&item.answer, &item.error) {
                (Some(a), None) => Ok((&item.query, a)),
                (_, Some(e)) => Err(format!("query {}: {e}", item.query.index)),
                (None, None) => Err(format!("query {}: missing answer", item.query.index)),
            })
            .collect()
    }
}

pub struct StageWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl StageWriter {
    pub fn create(path: &Path, header: &StageHeader) -> Result<Self, PipelineError> {
        let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_owned(),
        };
        w.write(header)?;
        Ok(w)
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), PipelineError> {
        let line = serde_json::to_string(record).expect("stage records serialize");
        writeln!(self.out, "{line}").map_err(|e| PipelineError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), PipelineError> {
        self.out.flush().map_err(|e| PipelineError::io(&self.path, e))
    }
}

/// Reads a stage file, checking the header names `stage`.
pub fn read_stage<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<(StageHeader, Vec<T>), PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let bad = |n: usize, e: String| PipelineError::StageFile(format!("{}:{}: {e}", path.display(), n + 1));

    let header: StageHeader = loop {
        match lines.next() {
            None => return Err(PipelineError::StageFile(format!("{}: missing header", path.display()))),
            Some((n, line)) => {
                let line = line.map_err(|e| PipelineError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| bad(n, e.to_string()))?;
            }
        }
    };
    if header.stage != stage {
        return Err(PipelineError::StageFile(format!(
            "{}: expected a {stage} file, found {}",
            path.display(),
            header.stage
        )));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(PipelineError::StageFile(format!(
            "{}: unsupported format version {}",
            path.display(),
            header.format_version
        )));
    }

    let mut records = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| bad(n, e.to_string()))?);
    }
    Ok((header, records))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| PipelineError::io(path, e))?;
    }
    out.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| PipelineError::StageFile(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}
