//! Yes/No answers for rendered queries from a pluggable vision-language
//! backend, with a shared score cache and bounded request concurrency.

mod backend;
mod cache;
mod remote;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    noisy_observation, FixtureBackend, FixtureRecord, NoisyPlantedBackend, OracleBackend, NO_CEIL,
    YES_FLOOR,
};
pub use cache::{AnswerCache, CacheRecord};
pub(crate) use remote::{post_json, CallError};
pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy};

use crate::extraction::Query;

/// Default Yes/No threshold on the raw match score.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("backend returned score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("no fixture entry for image {image:?}, text {text:?}")]
    NoFixtureEntry { image: String, text: String },
    #[error("invalid threshold {0}; must lie in [0, 1]")]
    InvalidThreshold(f64),
    #[error("max_inflight must be at least 1")]
    ZeroInflight,
    #[error("image reference must be non-empty")]
    EmptyImageRef,
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("answer cache: {0}")]
    Cache(String),
}

/// URI or content hash identifying an image. Opaque here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ImageRef(String);

impl ImageRef {
    pub fn new(s: impl Into<String>) -> Result<Self, OracleError> {
        let s = s.into();
        if s.trim().is_empty() {
            Err(OracleError::EmptyImageRef)
        } else {
            Ok(Self(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ImageRef {
    type Error = OracleError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        ImageRef::new(s)
    }
}

impl From<ImageRef> for String {
    fn from(r: ImageRef) -> Self {
        r.0
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score >= threshold {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    pub answer: Answer,
    pub raw_score: f64,
    pub oracle_id: String,
}

fn check_threshold(threshold: f64) -> Result<(), OracleError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(OracleError::InvalidThreshold(threshold))
    }
}

fn fetch_score<B: OracleBackend + ?Sized>(
    backend: &B,
    cache: &AnswerCache,
    image: &ImageRef,
    text: &str,
) -> Result<f64, OracleError> {
    if let Some(score) = cache.get(image.as_str(), text, backend.id()) {
        return Ok(score);
    }
    let score = call_backend(backend, image, text)?;
    cache.insert(image.as_str(), text, backend.id(), score)?;
    Ok(score)
}

fn call_backend<B: OracleBackend + ?Sized>(backend: &B, image: &ImageRef, text: &str) -> Result<f64, OracleError> {
    let score = backend.score(image, text)?;
    if !(0.0..=1.0).contains(&score) {
        return Err(OracleError::ScoreOutOfRange(score));
    }
    Ok(score)
}

/// Answers one query, consulting and then filling the cache.
pub fn answer_query<B: OracleBackend + ?Sized>(
    backend: &B,
    cache: &AnswerCache,
    image: &ImageRef,
    query: &Query,
    threshold: f64,
) -> Result<QueryAnswer, OracleError> {
    check_threshold(threshold)?;
    let raw_score = fetch_score(backend, cache, image, &query.text)?;
    Ok(QueryAnswer {
        answer: Answer::from_score(raw_score, threshold),
        raw_score,
        oracle_id: backend.id().to_owned(),
    })
}

/// Answers `queries` against one image; see [`batch_answer_items`].
pub fn batch_answer<B: OracleBackend + ?Sized>(
    backend: &B,
    cache: &AnswerCache,
    image: &ImageRef,
    queries: &[Query],
    threshold: f64,
    max_inflight: usize,
) -> Result<Vec<Result<QueryAnswer, OracleError>>, OracleError> {
    let items: Vec<(&ImageRef, &str)> = queries.iter().map(|q| (image, q.text.as_str())).collect();
    batch_answer_items(backend, cache, &items, threshold, max_inflight)
}

/// Answers `(image, text)` items with at most `max_inflight` backend calls
/// outstanding. Cached items never reach the backend. The output is aligned
/// with the input; each item carries its own status.
pub fn batch_answer_items<B: OracleBackend + ?Sized>(
    backend: &B,
    cache: &AnswerCache,
    items: &[(&ImageRef, &str)],
    threshold: f64,
    max_inflight: usize,
) -> Result<Vec<Result<QueryAnswer, OracleError>>, OracleError> {
    check_threshold(threshold)?;
    if max_inflight == 0 {
        return Err(OracleError::ZeroInflight);
    }

    let mut scores: Vec<Option<Result<f64, OracleError>>> = items
        .iter()
        .map(|(image, text)| cache.get(image.as_str(), text, backend.id()).map(Ok))
        .collect();
    let misses: Vec<usize> = (0..items.len()).filter(|&i| scores[i].is_none()).collect();

    if !misses.is_empty() {
        let next = AtomicUsize::new(0);
        let done = Mutex::new(Vec::with_capacity(misses.len()));
        std::thread::scope(|scope| {
            for _ in 0..max_inflight.min(misses.len()) {
                scope.spawn(|| loop {
                    let slot = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = misses.get(slot) else { break };
                    let (image, text) = items[i];
                    let result = call_backend(backend, image, text);
                    done.lock().expect("result lock poisoned").push((i, result));
                });
            }
        });
        let mut done = done.into_inner().expect("result lock poisoned");
        // Cache writes happen in input order so the cache file is reproducible.
        done.sort_by_key(|(i, _)| *i);
        for (i, result) in done {
            let (image, text) = items[i];
            let result = result.and_then(|score| {
                cache.insert(image.as_str(), text, backend.id(), score)?;
                Ok(score)
            });
            scores[i] = Some(result);
        }
    }

    Ok(scores
        .into_iter()
        .map(|s| {
            s.expect("every item is cached or fetched").map(|raw_score| QueryAnswer {
                answer: Answer::from_score(raw_score, threshold),
                raw_score,
                oracle_id: backend.id().to_owned(),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{ElementaryStatement, StatementKind};

    fn query(text: &str, index: usize) -> Query {
        Query {
            statement: ElementaryStatement {
                kind: StatementKind::Object,
                x: text.into(),
                y: None,
                z: None,
                source_nodes: vec![0],
            },
            text: text.into(),
            index,
        }
    }

    #[test]
    fn threshold_rule() {
        let backend = FixtureBackend::new("fx").with_entry("img1", "Is the photo about dog?", 0.9);
        let img = ImageRef::new("img1").unwrap();
        let q = query("Is the photo about dog?", 0);
        let cache = AnswerCache::in_memory();

        let a = answer_query(&backend, &cache, &img, &q, 0.5).unwrap();
        assert_eq!((a.answer, a.raw_score), (Answer::Yes, 0.9));
        let a = answer_query(&backend, &cache, &img, &q, 0.95).unwrap();
        assert_eq!(a.answer, Answer::No);
        let a = answer_query(&backend, &cache, &img, &q, 0.9).unwrap();
        assert_eq!(a.answer, Answer::Yes);
        assert_eq!(a.oracle_id, "fx");
    }

    #[test]
    fn rejects_out_of_range_scores_and_thresholds() {
        let backend = FixtureBackend::new("fx").with_entry("img", "q", 1.5);
        let img = ImageRef::new("img").unwrap();
        let cache = AnswerCache::in_memory();
        assert_eq!(
            answer_query(&backend, &cache, &img, &query("q", 0), 0.5).unwrap_err(),
            OracleError::ScoreOutOfRange(1.5)
        );
        assert!(cache.is_empty());
        assert_eq!(
            answer_query(&backend, &cache, &img, &query("q", 0), 1.2).unwrap_err(),
            OracleError::InvalidThreshold(1.2)
        );
    }

    #[test]
    fn empty_batch() {
        let backend = FixtureBackend::new("fx");
        let img = ImageRef::new("img").unwrap();
        let out = batch_answer(&backend, &AnswerCache::in_memory(), &img, &[], 0.5, 4).unwrap();
        assert!(out.is_empty());
        assert_eq!(
            batch_answer(&backend, &AnswerCache::in_memory(), &img, &[], 0.5, 0).unwrap_err(),
            OracleError::ZeroInflight
        );
    }

    #[test]
    fn image_ref_must_be_non_empty() {
        assert_eq!(ImageRef::new(" ").unwrap_err(), OracleError::EmptyImageRef);
        assert!(serde_json::from_str::<ImageRef>("\"\"").is_err());
    }
}
