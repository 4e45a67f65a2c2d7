use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::records::{
    read_jsonl, read_stage, AnswerItem, AnswersRecord, Dataset, QueriesRecord, SampleFailure, Split,
    StageHeader, StageWriter, FORMAT_VERSION,
};
use super::{PipelineConfig, PipelineError, SourceKind};
use crate::extraction::{extract_with_log, render_query};
use crate::metrics::{hit_at_k, EvidenceAnnotation, LabeledPrediction, MetricsReport};
use crate::oracle::{
    batch_answer_items, AnswerCache, FixtureBackend, ImageRef, OracleBackend, RemoteBackend,
};
use crate::ranker::{
    train, training_accuracy, Encoder, FixtureEncoder, ModelFile, RankerModel, RemoteEncoder,
    TrainSample, TrainingRecord,
};
use crate::verdict::{build_report, predict, select_evidence, EvidenceReport, ScoredQuery};

/// Size of the evidence prefix scored by HIT@k in evaluation reports.
const HIT_K: usize = 10;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutcome {
    pub written: usize,
    pub failures: Vec<SampleFailure>,
}

impl StageOutcome {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

fn header(stage: &str, cfg: &PipelineConfig) -> StageHeader {
    StageHeader {
        stage: stage.to_owned(),
        format_version: FORMAT_VERSION,
        config_hash: cfg.hash(),
        seed: cfg.seed,
    }
}

fn expect_hash(file: &Path, found: &str, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let expected = cfg.hash();
    if found == expected {
        Ok(())
    } else {
        Err(PipelineError::HashMismatch {
            file: file.display().to_string(),
            expected,
            found: found.to_owned(),
        })
    }
}

pub fn open_backend(cfg: &PipelineConfig) -> Result<Box<dyn OracleBackend>, PipelineError> {
    let id = cfg.oracle.oracle_id.clone();
    match cfg.oracle.backend {
        SourceKind::Fixture => {
            let path = cfg
                .oracle
                .fixture
                .as_deref()
                .ok_or_else(|| PipelineError::Config("oracle.fixture is required for the fixture backend".into()))?;
            Ok(Box::new(FixtureBackend::load(id, path)?))
        }
        SourceKind::Remote => {
            let remote = cfg
                .oracle
                .remote
                .clone()
                .ok_or_else(|| PipelineError::Config("oracle.remote is required for the remote backend".into()))?;
            Ok(Box::new(RemoteBackend::new(id, remote)))
        }
    }
}

pub fn open_encoder(cfg: &PipelineConfig) -> Result<Box<dyn Encoder>, PipelineError> {
    match cfg.encoder.kind {
        SourceKind::Fixture => {
            let path = cfg
                .encoder
                .fixture
                .as_deref()
                .ok_or_else(|| PipelineError::Config("encoder.fixture is required for the fixture encoder".into()))?;
            Ok(Box::new(FixtureEncoder::load(path)?))
        }
        SourceKind::Remote => {
            let remote = cfg
                .encoder
                .remote
                .clone()
                .ok_or_else(|| PipelineError::Config("encoder.remote is required for the remote encoder".into()))?;
            let dim = cfg
                .encoder
                .dim
                .ok_or_else(|| PipelineError::Config("encoder.dim is required for the remote encoder".into()))?;
            Ok(Box::new(RemoteEncoder::new(dim, remote)))
        }
    }
}

pub fn open_cache(cfg: &PipelineConfig) -> Result<AnswerCache, PipelineError> {
    match &cfg.oracle.cache {
        Some(path) => Ok(AnswerCache::open(path)?),
        None => Ok(AnswerCache::in_memory()),
    }
}

/// Extracts and renders queries for every parseable sample.
pub fn run_extract(dataset: &Path, out: &Path, cfg: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let data = Dataset::load(dataset)?;
    let mut writer = StageWriter::create(out, &header("queries", cfg))?;
    let mut outcome = StageOutcome {
        failures: data.failures,
        ..Default::default()
    };
    for sample in &data.samples {
        let extraction = extract_with_log(&sample.graph);
        for skip in &extraction.skipped {
            log::info!(target: "decontext::extraction", "{}: node {} skipped ({})", sample.id, skip.node, skip.reason);
        }
        let queries = extraction
            .statements
            .into_iter()
            .enumerate()
            .map(|(i, s)| render_query(s, i))
            .collect::<Result<Vec<_>, _>>();
        match queries {
            Ok(queries) => {
                writer.write(&QueriesRecord {
                    id: sample.id.clone(),
                    image: sample.image.clone(),
                    caption: sample.caption.clone(),
                    queries,
                })?;
                outcome.written += 1;
            }
            Err(e) => outcome.failures.push(SampleFailure {
                sample: sample.id.clone(),
                reason: format!("internal extraction fault: {e}"),
            }),
        }
    }
    writer.finish()?;
    Ok(outcome)
}

/// Answers every query of a queries file. Per-item failures are recorded in
/// the output and reported as partial failures.
pub fn run_answer(
    queries: &Path,
    out: &Path,
    cfg: &PipelineConfig,
    backend: &dyn OracleBackend,
    cache: &AnswerCache,
) -> Result<StageOutcome, PipelineError> {
    let (_, records): (_, Vec<QueriesRecord>) = read_stage(queries, "queries")?;
    let items: Vec<(&ImageRef, &str)> = records
        .iter()
        .flat_map(|r| r.queries.iter().map(move |q| (&r.image, q.text.as_str())))
        .collect();
    let mut results = batch_answer_items(backend, cache, &items, cfg.threshold, cfg.max_inflight)?.into_iter();

    let mut writer = StageWriter::create(out, &header("answers", cfg))?;
    let mut outcome = StageOutcome::default();
    for record in records {
        let mut first_error = None;
        let answers = record
            .queries
            .into_iter()
            .map(|query| {
                let result = results.next().expect("one result per query");
                match result {
                    Ok(a) => AnswerItem {
                        query,
                        answer: Some(a),
                        error: None,
                    },
                    Err(e) => {
                        let msg = e.to_string();
                        first_error.get_or_insert_with(|| format!("query {}: {msg}", query.index));
                        AnswerItem {
                            query,
                            answer: None,
                            error: Some(msg),
                        }
                    }
                }
            })
            .collect();
        if let Some(reason) = first_error {
            log::warn!(target: "decontext::oracle", "{}: {}", record.id, reason);
            outcome.failures.push(SampleFailure {
                sample: record.id.clone(),
                reason,
            });
        }
        writer.write(&AnswersRecord {
            id: record.id,
            image: record.image,
            caption: record.caption,
            answers,
        })?;
        outcome.written += 1;
    }
    writer.finish()?;
    Ok(outcome)
}

fn load_answers(path: &Path, cfg: &PipelineConfig) -> Result<HashMap<String, AnswersRecord>, PipelineError> {
    let (head, records): (_, Vec<AnswersRecord>) = read_stage(path, "answers")?;
    expect_hash(path, &head.config_hash, cfg)?;
    Ok(records.into_iter().map(|r| (r.id.clone(), r)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub outcome: StageOutcome,
    pub model: ModelFile,
}

/// Trains the ranker on the train split and writes the weight file.
pub fn run_train(
    dataset: &Path,
    answers: &Path,
    out: &Path,
    cfg: &PipelineConfig,
    encoder: &dyn Encoder,
) -> Result<TrainSummary, PipelineError> {
    let data = Dataset::load(dataset)?;
    let train_split: Vec<_> = data.samples.iter().filter(|s| s.split == Split::Train).collect();
    let unlabeled: Vec<String> = train_split
        .iter()
        .filter(|s| s.label.is_none())
        .map(|s| s.id.clone())
        .collect();
    if !unlabeled.is_empty() {
        return Err(PipelineError::MissingLabels(unlabeled));
    }
    let answers = load_answers(answers, cfg)?;

    let mut outcome = StageOutcome {
        failures: data.failures,
        ..Default::default()
    };
    let mut samples = Vec::new();
    for sample in train_split {
        let label = sample.label.expect("checked above");
        let built = answers
            .get(&sample.id)
            .ok_or_else(|| "no answers for sample".to_owned())
            .and_then(|record| record.complete())
            .and_then(|pairs| {
                pairs
                    .into_iter()
                    .map(|(query, answer)| {
                        encoder
                            .embed(&sample.image, &sample.caption, &query.text)
                            .map(|triple| TrainSample {
                                triple,
                                answer: answer.answer,
                                label,
                            })
                            .map_err(|e| e.to_string())
                    })
                    .collect::<Result<Vec<_>, _>>()
            });
        match built {
            Ok(mut s) => samples.append(&mut s),
            Err(reason) => outcome.failures.push(SampleFailure {
                sample: sample.id.clone(),
                reason,
            }),
        }
    }

    let hp = cfg.hyperparams();
    let dim = encoder.dim();
    let model = RankerModel::new(dim, cfg.ranker.hidden.unwrap_or(dim), cfg.init_seed())?;
    let trained = train(&samples, model, &hp)?;
    let accuracy = training_accuracy(&trained.model, &samples)?;
    log::info!(
        target: "decontext::ranker",
        "trained on {} query samples, final loss {:.4}, accuracy {:.3}",
        samples.len(),
        trained.loss_trace.last().copied().unwrap_or(f64::NAN),
        accuracy
    );

    let mut file = ModelFile::new(&trained.model);
    file.config_hash = Some(cfg.hash());
    file.training = Some(TrainingRecord {
        hyperparams: hp,
        samples: samples.len(),
        loss_trace: trained.loss_trace,
        training_accuracy: accuracy,
    });
    file.save(out)?;
    outcome.written = 1;
    Ok(TrainSummary { outcome, model: file })
}

#[derive(Debug, Clone)]
pub struct EvaluateInputs {
    pub dataset: PathBuf,
    pub answers: PathBuf,
    /// `None` ranks every query equally (the no-ranker ablation).
    pub model: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub config_hash: String,
    pub seed: u64,
    pub split: Split,
    pub ranker: bool,
    pub k: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub outcome: StageOutcome,
    pub metrics: MetricsReport,
    pub reports: Vec<EvidenceReport>,
}

/// Scores one split: evidence reports per sample plus the metrics report.
pub fn run_evaluate(
    inputs: &EvaluateInputs,
    cfg: &PipelineConfig,
    encoder: &dyn Encoder,
) -> Result<EvaluateSummary, PipelineError> {
    let data = Dataset::load(&inputs.dataset)?;
    let samples: Vec<_> = data.samples.iter().filter(|s| s.split == inputs.split).collect();
    let unlabeled: Vec<String> = samples
        .iter()
        .filter(|s| s.label.is_none())
        .map(|s| s.id.clone())
        .collect();
    if !unlabeled.is_empty() {
        return Err(PipelineError::MissingLabels(unlabeled));
    }
    let answers = load_answers(&inputs.answers, cfg)?;
    let model = match &inputs.model {
        Some(path) => {
            let file = ModelFile::load(path)?;
            expect_hash(path, file.config_hash.as_deref().unwrap_or(""), cfg)?;
            Some(file.model()?)
        }
        None => None,
    };
    let annotations: Option<Vec<EvidenceAnnotation>> = inputs
        .annotations
        .as_deref()
        .map(read_jsonl)
        .transpose()?;

    let mut outcome = StageOutcome {
        failures: data.failures,
        ..Default::default()
    };
    let mut reports = Vec::new();
    let mut preds = Vec::new();
    for sample in samples {
        let evaluated = answers
            .get(&sample.id)
            .ok_or_else(|| "no answers for sample".to_owned())
            .and_then(|record| record.complete())
            .and_then(|pairs| {
                let mut scored = Vec::with_capacity(pairs.len());
                for (query, answer) in pairs {
                    let p_s = match &model {
                        Some(m) => encoder
                            .embed(&sample.image, &sample.caption, &query.text)
                            .and_then(|t| m.support(&t))
                            .map_err(|e| e.to_string())?,
                        None => 0.5,
                    };
                    scored.push(ScoredQuery {
                        query: query.clone(),
                        answer: answer.clone(),
                        p_s,
                    });
                }
                Ok(scored)
            });
        let scored = match evaluated {
            Ok(s) => s,
            Err(reason) => {
                log::warn!(target: "decontext::evaluate", "{}: {}", sample.id, reason);
                outcome.failures.push(SampleFailure {
                    sample: sample.id.clone(),
                    reason,
                });
                continue;
            }
        };
        let verdict = predict(&select_evidence(&scored, cfg.k));
        let queries: Vec<_> = scored.iter().map(|s| s.query.clone()).collect();
        let answers: Vec<_> = scored.iter().map(|s| s.answer.clone()).collect();
        let p_s: Vec<_> = scored.iter().map(|s| s.p_s).collect();
        reports.push(build_report(
            &sample.id,
            &sample.caption,
            &sample.image,
            &queries,
            &answers,
            &p_s,
            &verdict,
        )?);
        preds.push(LabeledPrediction {
            true_label: sample.label.expect("checked above"),
            predicted_label: verdict.label,
            score: verdict.score,
        });
    }
    if preds.is_empty() {
        return Err(PipelineError::NoSamples(inputs.split));
    }

    let mut metrics = MetricsReport::compute(&preds)?;
    if let Some(annotations) = &annotations {
        let ids: std::collections::HashSet<&str> = annotations.iter().map(|a| a.id.as_str()).collect();
        let annotated: Vec<EvidenceReport> = reports
            .iter()
            .filter(|r| ids.contains(r.id.as_str()))
            .cloned()
            .collect();
        metrics.annotated = Some(annotated.len());
        if !annotated.is_empty() {
            metrics.hit_at_10 = Some(hit_at_k(&annotated, annotations, HIT_K)?);
        }
    }

    std::fs::create_dir_all(&inputs.out_dir).map_err(|e| PipelineError::io(&inputs.out_dir, e))?;
    let metrics_file = MetricsFile {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        split: inputs.split,
        ranker: model.is_some(),
        k: cfg.k,
        metrics: metrics.clone(),
    };
    let metrics_path = inputs.out_dir.join("metrics.json");
    let mut json = serde_json::to_string_pretty(&metrics_file).expect("metrics serialize");
    json.push('\n');
    std::fs::write(&metrics_path, json).map_err(|e| PipelineError::io(&metrics_path, e))?;

    let mut writer = StageWriter::create(&inputs.out_dir.join("reports.jsonl"), &header("reports", cfg))?;
    let mut text = String::new();
    for r in &reports {
        writer.write(r)?;
        text.push_str(&r.render_text());
    }
    writer.finish()?;
    let text_path = inputs.out_dir.join("reports.txt");
    std::fs::write(&text_path, text).map_err(|e| PipelineError::io(&text_path, e))?;

    outcome.written = reports.len();
    Ok(EvaluateSummary {
        outcome,
        metrics,
        reports,
    })
}
