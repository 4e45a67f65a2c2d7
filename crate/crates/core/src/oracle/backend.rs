use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ImageRef, OracleError};
use crate::hashing::derive_seed;

/// An image-text matching model seen as a black box.
///
/// Implementations must tolerate concurrent calls from several request slots.
pub trait OracleBackend: Send + Sync {
    /// Provenance string recorded next to every answer and cache entry.
    fn id(&self) -> &str;

    /// Match confidence in `[0, 1]` that `text` holds for `image`.
    fn score(&self, image: &ImageRef, text: &str) -> Result<f64, OracleError>;
}

impl<B: OracleBackend + ?Sized> OracleBackend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, image: &ImageRef, text: &str) -> Result<f64, OracleError> {
        (**self).score(image, text)
    }
}

impl<B: OracleBackend + ?Sized> OracleBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, image: &ImageRef, text: &str) -> Result<f64, OracleError> {
        (**self).score(image, text)
    }
}

/// One row of a fixture table file (JSON Lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub image: String,
    pub text: String,
    pub score: f64,
    /// Ground truth before noise, when the table was planted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<bool>,
}

/// Lookup-table backend.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    id: String,
    table: HashMap<(String, String), f64>,
}

impl FixtureBackend {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            table: HashMap::new(),
        }
    }

    pub fn with_entry(mut self, image: &str, text: &str, score: f64) -> Self {
        self.insert(image, text, score);
        self
    }

    pub fn insert(&mut self, image: &str, text: &str, score: f64) {
        self.table.insert((image.to_owned(), text.to_owned()), score);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn from_records(id: impl Into<String>, records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        let mut backend = Self::new(id);
        for r in records {
            backend.insert(&r.image, &r.text, r.score);
        }
        backend
    }

    pub fn load(id: impl Into<String>, path: &Path) -> Result<Self, OracleError> {
        let file = std::fs::File::open(path)
            .map_err(|e| OracleError::Fixture(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| OracleError::Fixture(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(&line)
                .map_err(|e| OracleError::Fixture(format!("{}:{}: {e}", path.display(), n + 1)))?;
            records.push(record);
        }
        Ok(Self::from_records(id, records))
    }
}

impl OracleBackend for FixtureBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, image: &ImageRef, text: &str) -> Result<f64, OracleError> {
        self.table
            .get(&(image.as_str().to_owned(), text.to_owned()))
            .copied()
            .ok_or_else(|| OracleError::NoFixtureEntry {
                image: image.as_str().to_owned(),
                text: text.to_owned(),
            })
    }
}

/// Planted truth with seeded Bernoulli(ε) answer flips.
///
/// Flips and scores are a pure function of `(seed, image, text)`, so results
/// do not depend on call order or concurrency.
#[derive(Debug, Clone)]
pub struct NoisyPlantedBackend {
    id: String,
    truth: HashMap<(String, String), bool>,
    noise: f64,
    seed: u64,
}

/// Scores for a Yes answer are drawn from `[YES_FLOOR, 1]`, No from `[0, NO_CEIL]`.
pub const YES_FLOOR: f64 = 0.55;
pub const NO_CEIL: f64 = 0.45;

impl NoisyPlantedBackend {
    pub fn new(id: impl Into<String>, noise: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&noise), "noise must lie in [0, 1]");
        Self {
            id: id.into(),
            truth: HashMap::new(),
            noise,
            seed,
        }
    }

    pub fn plant(&mut self, image: &str, text: &str, holds: bool) {
        self.truth.insert((image.to_owned(), text.to_owned()), holds);
    }

    pub fn planted(&self, image: &str, text: &str) -> Option<bool> {
        self.truth.get(&(image.to_owned(), text.to_owned())).copied()
    }

    /// Observed (possibly flipped) answer and its score.
    pub fn observe(&self, image: &str, text: &str) -> Option<(bool, f64)> {
        let truth = self.planted(image, text)?;
        Some(noisy_observation(truth, self.noise, self.seed, image, text))
    }
}

/// The observation rule shared by the backend and the synthetic generator.
pub fn noisy_observation(truth: bool, noise: f64, seed: u64, image: &str, text: &str) -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["oracle-noise", image, text]));
    let flipped = rng.gen_bool(noise);
    let observed = truth != flipped;
    let score = if observed {
        rng.gen_range(YES_FLOOR..=1.0)
    } else {
        rng.gen_range(0.0..=NO_CEIL)
    };
    (observed, score)
}

impl OracleBackend for NoisyPlantedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, image: &ImageRef, text: &str) -> Result<f64, OracleError> {
        self.observe(image.as_str(), text)
            .map(|(_, score)| score)
            .ok_or_else(|| OracleError::NoFixtureEntry {
                image: image.as_str().to_owned(),
                text: text.to_owned(),
            })
    }
}
