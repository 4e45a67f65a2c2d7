//! Synthetic planted-truth datasets.
//!
//! Every sample gets a random annotated caption graph. Real samples plant
//! Yes for every extracted query (optionally with one No distractor); Fake
//! samples plant No for a random half-or-more of their queries, and those
//! statements' slots become the sample's evidence annotation. Oracle answers
//! are the planted truth with seeded flip noise. Embeddings place each
//! query in a Gaussian cluster keyed by its planted answer and each caption
//! in a cluster keyed by the pair label, so the ranker's four classes are
//! separable.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::records::{write_jsonl, Sample, Split};
use super::PipelineError;
use crate::extraction::extract_queries;
use crate::graph::{AmrEdge, AmrGraph, AmrNode, GraphDocument, NeType, NodeId, PosTag};
use crate::hashing::derive_seed;
use crate::label::PairLabel;
use crate::metrics::EvidenceAnnotation;
use crate::oracle::{noisy_observation, Answer, FixtureRecord, ImageRef};
use crate::ranker::{EmbeddingRecord, EmbeddingTriple, TrainSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub size: usize,
    /// Oracle flip probability, in `[0, 0.5)`.
    pub noise: f64,
    pub seed: u64,
    pub dim: usize,
    /// Share of Real samples carrying one planted-No distractor query.
    pub distractor_rate: f64,
    /// Stratified train/val/test weights.
    pub split: [u32; 3],
    pub min_queries: usize,
    /// Standard deviation of the embedding clusters.
    pub sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 20,
            noise: 0.0,
            seed: 0,
            dim: 16,
            distractor_rate: 0.0,
            split: [10, 1, 1],
            min_queries: 20,
            sigma: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub config: SynthConfig,
    pub samples: usize,
    pub real: usize,
    pub fake: usize,
    pub queries: usize,
    pub flipped: usize,
    pub flip_fraction: f64,
    pub distractors: usize,
}

/// Files written by [`generate`], relative to the output directory.
/// Share of a Fake sample's queries planted No. Fakes are partial
/// contradictions, so an unranked prefix of queries is often split evenly.
const FAKE_NO_SHARE: std::ops::RangeInclusive<f64> = 0.5..=0.8;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const FIXTURE_FILE: &str = "oracle_fixture.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const MANIFEST_FILE: &str = "synth_manifest.json";
pub const CONFIG_FILE: &str = "pipeline.toml";
pub const CACHE_FILE: &str = "oracle_cache.jsonl";

const NOUNS: &[&str] = &[
    "dog", "car", "taxi", "crowd", "flag", "bridge", "river", "tree", "house", "boat", "horse", "train",
    "bicycle", "child", "woman", "man", "soldier", "tent", "stadium", "ball", "fire", "smoke", "banner",
    "market", "table", "podium", "microphone", "camera", "street", "road", "truck", "bus", "church",
    "tower", "statue", "garden", "beach", "mountain", "snow", "rain", "police", "doctor", "nurse",
    "student", "farmer", "ship", "plane", "airport", "hospital", "school", "factory", "protest",
    "fireworks", "parade", "umbrella", "helmet", "uniform", "fence", "gate", "window",
];
const PERSONS: &[&str] = &[
    "Angela Merkel", "Barack Obama", "Serena Williams", "Lionel Messi", "Emmanuel Macron", "Greta Thunberg",
    "Elon Musk", "Taylor Swift", "Pope Francis", "Boris Johnson", "Jacinda Ardern", "Roger Federer",
    "Narendra Modi", "Justin Trudeau", "Kamala Harris", "Xi Jinping",
];
const ORGS: &[&str] = &[
    "United Nations", "Red Cross", "NASA", "World Health Organization", "European Union", "FIFA",
    "Greenpeace", "NATO", "BBC", "Amnesty International", "Apple", "Toyota",
];
const LOCATIONS: &[&str] = &[
    "Paris", "London", "Beijing", "New York", "Berlin", "Tokyo", "Sydney", "Cairo", "Moscow", "Rio de Janeiro",
    "Mumbai", "Nairobi", "Toronto", "Madrid", "Rome", "Seoul",
];
const TIMES: &[&str] = &[
    "winter", "summer", "spring", "autumn", "Independence Day", "Christmas", "night", "morning", "2019",
    "2020", "New Year", "Easter", "sunset", "midnight",
];
const ADJECTIVES: &[&str] = &[
    "brown", "yellow", "blue", "red", "green", "old", "young", "large", "small", "crowded", "empty", "wet",
    "burning", "broken", "smiling", "angry", "tall", "wooden", "famous", "white", "black", "dark", "bright",
    "flooded",
];
const VERBS: &[&str] = &[
    "run", "hold", "wave", "speak", "carry", "ride", "meet", "visit", "watch", "celebrate", "build", "cross",
    "attend", "march", "protest", "win", "play", "greet", "sign", "inspect", "rescue", "cheer", "drive",
    "board",
];
const PRONOUNS: &[&str] = &["his", "her", "their", "its", "with"];

#[derive(Clone, Copy)]
enum NominalKind {
    Noun,
    Person,
    Org,
    Location,
    Time,
}

impl NominalKind {
    fn pool(self) -> &'static [&'static str] {
        match self {
            NominalKind::Noun => NOUNS,
            NominalKind::Person => PERSONS,
            NominalKind::Org => ORGS,
            NominalKind::Location => LOCATIONS,
            NominalKind::Time => TIMES,
        }
    }

    fn tags(self) -> (PosTag, NeType) {
        match self {
            NominalKind::Noun => (PosTag::Noun, NeType::None),
            NominalKind::Person => (PosTag::NamedEntity, NeType::Person),
            NominalKind::Org => (PosTag::NamedEntity, NeType::Organization),
            NominalKind::Location => (PosTag::NamedEntity, NeType::Location),
            NominalKind::Time => (PosTag::Noun, NeType::Time),
        }
    }
}

struct GraphBuilder<'r> {
    rng: &'r mut ChaCha8Rng,
    nodes: Vec<(String, PosTag, NeType)>,
    edges: Vec<(usize, usize, &'static str)>,
    used: HashSet<&'static str>,
}

impl<'r> GraphBuilder<'r> {
    fn fresh(&mut self, pool: &'static [&'static str]) -> &'static str {
        loop {
            let w = *pool.choose(self.rng).expect("pools are non-empty");
            if self.used.insert(w) {
                return w;
            }
        }
    }

    fn add(&mut self, surface: &'static str, pos: PosTag, ne: NeType) -> usize {
        self.nodes.push((surface.to_owned(), pos, ne));
        self.nodes.len() - 1
    }
}

/// A random caption graph of at most 30 nodes: 9-11 nominals, adjectives on
/// some common nouns, 4-6 verbs of arity 1-3, and occasional pronouns and
/// filler nodes.
pub fn random_graph(rng: &mut ChaCha8Rng) -> AmrGraph {
    let mut b = GraphBuilder {
        rng,
        nodes: Vec::new(),
        edges: Vec::new(),
        used: HashSet::new(),
    };

    let nominal_count = b.rng.gen_range(9..=11);
    let mut nominals = Vec::new();
    for _ in 0..nominal_count {
        let roll: f64 = b.rng.gen();
        let kind = match roll {
            r if r < 0.5 => NominalKind::Noun,
            r if r < 0.65 => NominalKind::Person,
            r if r < 0.75 => NominalKind::Org,
            r if r < 0.9 => NominalKind::Location,
            _ => NominalKind::Time,
        };
        let surface = b.fresh(kind.pool());
        let (pos, ne) = kind.tags();
        nominals.push(b.add(surface, pos, ne));
    }

    for &n in &nominals.clone() {
        if b.nodes[n].2 == NeType::None && b.rng.gen_bool(0.5) {
            let adj = b.fresh(ADJECTIVES);
            let a = b.add(adj, PosTag::Adjective, NeType::None);
            b.edges.push((n, a, ":mod"));
        }
    }

    for _ in 0..b.rng.gen_range(4..=6) {
        let verb = b.fresh(VERBS);
        let v = b.add(verb, PosTag::Verb, NeType::None);
        let arity = match b.rng.gen::<f64>() {
            r if r < 0.4 => 1,
            r if r < 0.9 => 2,
            _ => 3,
        };
        let args: Vec<usize> = nominals.choose_multiple(b.rng, arity).copied().collect();
        for (i, arg) in args.into_iter().enumerate() {
            b.edges.push((v, arg, [":ARG0", ":ARG1", ":ARG2"][i]));
        }
    }

    if b.rng.gen_bool(0.3) {
        let pron = b.fresh(PRONOUNS);
        let p = b.add(pron, PosTag::Pronoun, NeType::None);
        let args: Vec<usize> = nominals.choose_multiple(b.rng, 2).copied().collect();
        for arg in args {
            b.edges.push((p, arg, ":poss"));
        }
    }

    if b.rng.gen_bool(0.5) {
        let o = b.add("and", PosTag::Other, NeType::None);
        let target = *nominals.choose(b.rng).unwrap();
        b.edges.push((o, target, ":op1"));
    }

    let caption = format!(
        "{}.",
        b.nodes.iter().map(|n| n.0.as_str()).collect::<Vec<_>>().join(" ")
    );
    let mut ids: Vec<NodeId> = (0..b.nodes.len() as NodeId).collect();
    ids.shuffle(b.rng);
    let doc = GraphDocument {
        caption,
        nodes: b
            .nodes
            .iter()
            .enumerate()
            .map(|(i, (s, pos, ne))| AmrNode::new(ids[i], s.clone(), *pos, *ne))
            .collect(),
        edges: b
            .edges
            .iter()
            .map(|&(s, d, rel)| AmrEdge::new(ids[s], ids[d], rel))
            .collect(),
    };
    AmrGraph::from_document(doc).expect("generator builds valid graphs")
}

/// Cluster centres: two per planted answer (query side) and two per pair
/// label (caption side). Entries are random signs, so distinct centres are
/// at least 2 apart.
struct Centres {
    query: [[Vec<f64>; 2]; 2],
    caption: [[Vec<f64>; 2]; 2],
}

impl Centres {
    fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["centres"]));
        let mut seen: Vec<Vec<f64>> = Vec::new();
        let mut draw = |rng: &mut ChaCha8Rng| loop {
            let v: Vec<f64> = (0..dim).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            if dim >= 3 && seen.contains(&v) {
                continue;
            }
            seen.push(v.clone());
            return v;
        };
        let query = [[draw(&mut rng), draw(&mut rng)], [draw(&mut rng), draw(&mut rng)]];
        let caption = [[draw(&mut rng), draw(&mut rng)], [draw(&mut rng), draw(&mut rng)]];
        Self { query, caption }
    }

    fn query_centre(&self, planted_yes: bool, cluster: usize) -> &[f64] {
        &self.query[usize::from(!planted_yes)][cluster]
    }

    fn caption_centre(&self, label: PairLabel, cluster: usize) -> &[f64] {
        &self.caption[usize::from(label == PairLabel::Fake)][cluster]
    }
}

fn jitter(centre: &[f64], noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    centre.iter().map(|c| c + noise.sample(rng)).collect()
}

fn ones_jitter(dim: usize, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| 1.0 + noise.sample(rng)).collect()
}

/// A four-class training set with two Gaussian clusters per class, classes
/// assigned round-robin. Used to check that the ranker can fit separable data.
pub fn separable_training_set(dim: usize, n: usize, sigma: f64, seed: u64) -> Vec<TrainSample> {
    let centres = Centres::new(dim, seed);
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["separable"]));
    let classes = [
        (Answer::Yes, PairLabel::Real),
        (Answer::No, PairLabel::Fake),
        (Answer::No, PairLabel::Real),
        (Answer::Yes, PairLabel::Fake),
    ];
    (0..n)
        .map(|i| {
            let (answer, label) = classes[i % 4];
            let cluster = rng.gen_range(0..2);
            TrainSample {
                triple: EmbeddingTriple {
                    h_q: jitter(centres.query_centre(answer.is_yes(), cluster), &noise, &mut rng),
                    h_c: jitter(centres.caption_centre(label, cluster), &noise, &mut rng),
                    h_v: ones_jitter(dim, &noise, &mut rng),
                },
                answer,
                label,
            }
        })
        .collect()
}

fn stratified_splits(labels: &[PairLabel], weights: [u32; 3], rng: &mut ChaCha8Rng) -> Vec<Split> {
    let total: u32 = weights.iter().sum();
    let mut splits = vec![Split::Test; labels.len()];
    for class in [PairLabel::Real, PairLabel::Fake] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        let n = members.len() as f64;
        let n_train = (n * weights[0] as f64 / total as f64).round() as usize;
        let n_val = ((n * weights[1] as f64 / total as f64).round() as usize).min(members.len() - n_train);
        for (pos, &i) in members.iter().enumerate() {
            splits[i] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    splits
}

pub struct SynthOutput {
    pub samples: Vec<Sample>,
    pub fixture: Vec<FixtureRecord>,
    pub embeddings: Vec<EmbeddingRecord>,
    pub annotations: Vec<EvidenceAnnotation>,
    pub summary: SynthSummary,
}

/// Builds a synthetic dataset in memory.
pub fn build(config: &SynthConfig) -> Result<SynthOutput, PipelineError> {
    if !(0.0..0.5).contains(&config.noise) {
        return Err(PipelineError::Config(format!("noise {} must lie in [0, 0.5)", config.noise)));
    }
    if !(0.0..=1.0).contains(&config.distractor_rate) {
        return Err(PipelineError::Config("distractor_rate must lie in [0, 1]".into()));
    }
    if config.dim == 0 || config.split.iter().sum::<u32>() == 0 || !(config.sigma >= 0.0) {
        return Err(PipelineError::Config("dim, split weights and sigma must be positive".into()));
    }

    let centres = Centres::new(config.dim, config.seed);
    let noise = Normal::new(0.0, config.sigma).expect("sigma checked");
    let mut global = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["global"]));
    let labels: Vec<PairLabel> = (0..config.size)
        .map(|i| if i % 2 == 0 { PairLabel::Real } else { PairLabel::Fake })
        .collect();
    let splits = stratified_splits(&labels, config.split, &mut global);
    let width = config.size.saturating_sub(1).to_string().len().max(4);

    let mut out = SynthOutput {
        samples: Vec::new(),
        fixture: Vec::new(),
        embeddings: Vec::new(),
        annotations: Vec::new(),
        summary: SynthSummary {
            config: config.clone(),
            samples: config.size,
            real: labels.iter().filter(|l| **l == PairLabel::Real).count(),
            fake: labels.iter().filter(|l| **l == PairLabel::Fake).count(),
            queries: 0,
            flipped: 0,
            flip_fraction: 0.0,
            distractors: 0,
        },
    };

    for (i, (&label, &split)) in labels.iter().zip(&splits).enumerate() {
        let id = format!("s{i:0width$}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["sample", &id]));
        let (graph, queries) = loop {
            let g = random_graph(&mut rng);
            let q = extract_queries(&g);
            if q.len() >= config.min_queries {
                break (g, q);
            }
        };
        let image = ImageRef::new(format!("synth://{}/{id}.jpg", config.seed)).expect("non-empty");
        let n = queries.len();

        let mut planted = vec![true; n];
        match label {
            PairLabel::Real => {
                if rng.gen_bool(config.distractor_rate) {
                    planted[rng.gen_range(0..n)] = false;
                    out.summary.distractors += 1;
                }
            }
            PairLabel::Fake => {
                let share: f64 = rng.gen_range(FAKE_NO_SHARE);
                let contradicted = ((share * n as f64).ceil() as usize).clamp(1, n);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                for &q in &order[..contradicted] {
                    planted[q] = false;
                }
                let mut slots: Vec<String> = Vec::new();
                for (q, _) in queries.iter().zip(&planted).filter(|(_, p)| !**p) {
                    for s in q.statement.slots() {
                        if !slots.iter().any(|x| x == s) {
                            slots.push(s.to_owned());
                        }
                    }
                }
                out.annotations.push(EvidenceAnnotation { id: id.clone(), slots });
            }
        }

        let caption = graph.caption().to_owned();
        let h_c = jitter(centres.caption_centre(label, rng.gen_range(0..2)), &noise, &mut rng);
        let h_v = ones_jitter(config.dim, &noise, &mut rng);
        for (q, &truth) in queries.iter().zip(&planted) {
            let (observed, score) = noisy_observation(truth, config.noise, config.seed, image.as_str(), &q.text);
            if observed != truth {
                out.summary.flipped += 1;
            }
            out.fixture.push(FixtureRecord {
                image: image.as_str().to_owned(),
                text: q.text.clone(),
                score,
                planted: Some(truth),
            });
            out.embeddings.push(EmbeddingRecord {
                image: image.as_str().to_owned(),
                caption: caption.clone(),
                query: q.text.clone(),
                h_q: jitter(centres.query_centre(truth, rng.gen_range(0..2)), &noise, &mut rng),
                h_c: h_c.clone(),
                h_v: h_v.clone(),
            });
        }
        out.summary.queries += n;

        out.samples.push(Sample {
            id,
            caption,
            image,
            graph,
            label: Some(label),
            split,
        });
    }
    out.summary.flip_fraction = if out.summary.queries == 0 {
        0.0
    } else {
        out.summary.flipped as f64 / out.summary.queries as f64
    };
    Ok(out)
}

/// Builds a dataset and writes it, with a ready-to-use pipeline config, to `dir`.
pub fn generate(config: &SynthConfig, dir: &Path) -> Result<SynthSummary, PipelineError> {
    let out = build(config)?;
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    write_jsonl(&dir.join(DATASET_FILE), &out.samples)?;
    write_jsonl(&dir.join(FIXTURE_FILE), &out.fixture)?;
    write_jsonl(&dir.join(EMBEDDINGS_FILE), &out.embeddings)?;
    write_jsonl(&dir.join(ANNOTATIONS_FILE), &out.annotations)?;

    let manifest = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    json.push('\n');
    std::fs::write(&manifest, json).map_err(|e| PipelineError::io(&manifest, e))?;

    let config_path = dir.join(CONFIG_FILE);
    let toml = format!(
        "seed = {}\n\n[oracle]\nbackend = \"fixture\"\noracle_id = \"synth-fixture\"\nfixture = \"{FIXTURE_FILE}\"\ncache = \"{CACHE_FILE}\"\n\n[encoder]\nkind = \"fixture\"\nfixture = \"{EMBEDDINGS_FILE}\"\n",
        config.seed
    );
    std::fs::write(&config_path, toml).map_err(|e| PipelineError::io(&config_path, e))?;
    Ok(out.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graphs_are_valid_and_rich_enough() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = random_graph(&mut rng);
            assert!(g.nodes().len() >= 10);
            assert!(extract_queries(&g).len() >= 8);
        }
    }

    #[test]
    fn rejects_noise_out_of_range() {
        let cfg = SynthConfig {
            noise: 0.5,
            ..Default::default()
        };
        assert!(build(&cfg).is_err());
    }

    #[test]
    fn fakes_are_annotated_and_contradicted() {
        let out = build(&SynthConfig {
            size: 10,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(out.annotations.len(), 5);
        assert!(out.annotations.iter().all(|a| !a.slots.is_empty()));
        assert_eq!(out.summary.flipped, 0);
        assert!(out.samples.iter().all(|s| s.validate().is_ok()));
    }

    #[test]
    fn splits_are_stratified() {
        let labels: Vec<_> = (0..24)
            .map(|i| if i % 2 == 0 { PairLabel::Real } else { PairLabel::Fake })
            .collect();
        let splits = stratified_splits(&labels, [1, 0, 1], &mut ChaCha8Rng::seed_from_u64(0));
        for class in [PairLabel::Real, PairLabel::Fake] {
            let test = (0..24)
                .filter(|&i| labels[i] == class && splits[i] == Split::Test)
                .count();
            assert_eq!(test, 6);
        }
    }
}
