use std::fs;
use std::path::Path;

use decontext_core::oracle::FixtureRecord;
use decontext_core::pipeline::synth::{self, SynthConfig};
use decontext_core::pipeline::{
    open_backend, open_cache, open_encoder, read_jsonl, read_stage, run_answer, run_evaluate, run_extract,
    run_train, AnswersRecord, EvaluateInputs, PipelineError, QueriesRecord, Split,
};
use decontext_core::{Answer, PipelineConfig, Sample};

fn synth_into(dir: &Path, size: usize, noise: f64, seed: u64) -> PipelineConfig {
    synth::generate(
        &SynthConfig {
            size,
            noise,
            seed,
            ..SynthConfig::default()
        },
        dir,
    )
    .unwrap();
    PipelineConfig::load(&dir.join(synth::CONFIG_FILE)).unwrap()
}

fn answer(dir: &Path, cfg: &PipelineConfig) -> std::path::PathBuf {
    let queries = dir.join("queries.jsonl");
    let answers = dir.join("answers.jsonl");
    run_extract(&dir.join(synth::DATASET_FILE), &queries, cfg).unwrap();
    let backend = open_backend(cfg).unwrap();
    let cache = open_cache(cfg).unwrap();
    run_answer(&queries, &answers, cfg, backend.as_ref(), &cache).unwrap();
    answers
}

#[test]
fn empty_dataset_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.jsonl");
    fs::write(&data, "").unwrap();
    let out = dir.path().join("q.jsonl");
    let outcome = run_extract(&data, &out, &PipelineConfig::default()).unwrap();
    assert_eq!(outcome.written, 0);
    assert!(!outcome.is_partial());
    let (_, records): (_, Vec<QueriesRecord>) = read_stage(&out, "queries").unwrap();
    assert!(records.is_empty());
}

#[test]
fn corrupt_sample_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 3, 0.0, 1);
    let data = dir.path().join(synth::DATASET_FILE);
    let text = fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    // Point an edge at a node that does not exist.
    let mut v: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    v["graph"]["edges"][0]["dst"] = serde_json::json!(9999);
    lines[1] = v.to_string();
    fs::write(&data, lines.join("\n")).unwrap();

    let out = dir.path().join("q.jsonl");
    let outcome = run_extract(&data, &out, &cfg).unwrap();
    assert_eq!(outcome.written, 2);
    assert_eq!(outcome.failures.len(), 1);
    let (_, records): (_, Vec<QueriesRecord>) = read_stage(&out, "queries").unwrap();
    assert_eq!(records.len(), 2);
}

#[test]
fn extraction_records_carry_expected_query_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 2, 0.0, 4);
    let out = dir.path().join("q.jsonl");
    run_extract(&dir.path().join(synth::DATASET_FILE), &out, &cfg).unwrap();
    let samples: Vec<Sample> = read_jsonl(&dir.path().join(synth::DATASET_FILE)).unwrap();
    let (header, records): (_, Vec<QueriesRecord>) = read_stage(&out, "queries").unwrap();
    assert_eq!(header.config_hash, cfg.hash());
    assert_eq!(header.seed, cfg.seed);
    for (s, r) in samples.iter().zip(&records) {
        assert_eq!(r.queries, decontext_core::extract_queries(&s.graph));
    }
}

#[test]
fn noiseless_fixture_answers_equal_planted_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 6, 0.0, 2);
    let answers = answer(dir.path(), &cfg);
    let fixture: Vec<FixtureRecord> = read_jsonl(&dir.path().join(synth::FIXTURE_FILE)).unwrap();
    let (_, records): (_, Vec<AnswersRecord>) = read_stage(&answers, "answers").unwrap();
    let mut checked = 0;
    for r in &records {
        for (q, a) in r.complete().unwrap() {
            let row = fixture
                .iter()
                .find(|f| f.image == r.image.as_str() && f.text == q.text)
                .unwrap();
            assert_eq!(a.raw_score, row.score);
            assert_eq!(a.answer == Answer::Yes, row.planted.unwrap());
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn warm_cache_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 6, 0.1, 3);
    let first = fs::read(answer(dir.path(), &cfg)).unwrap();
    assert!(dir.path().join(synth::CACHE_FILE).exists());
    let second = fs::read(answer(dir.path(), &cfg)).unwrap();
    assert_eq!(first, second);
}

#[test]
fn synth_is_byte_identical_for_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_into(a.path(), 12, 0.1, 9);
    synth_into(b.path(), 12, 0.1, 9);
    for f in [synth::DATASET_FILE, synth::FIXTURE_FILE, synth::EMBEDDINGS_FILE, synth::ANNOTATIONS_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn training_needs_labels_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 12, 0.0, 5);
    let answers = answer(dir.path(), &cfg);
    let data = dir.path().join(synth::DATASET_FILE);
    let encoder = open_encoder(&cfg).unwrap();

    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    run_train(&data, &answers, &m1, &cfg, encoder.as_ref()).unwrap();
    run_train(&data, &answers, &m2, &cfg, encoder.as_ref()).unwrap();
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());

    let unlabeled = dir.path().join("unlabeled.jsonl");
    let samples: Vec<Sample> = read_jsonl(&data).unwrap();
    let stripped: Vec<Sample> = samples
        .into_iter()
        .map(|s| Sample { label: None, ..s })
        .collect();
    decontext_core::pipeline::write_jsonl(&unlabeled, &stripped).unwrap();
    let m3 = dir.path().join("m3.json");
    let err = run_train(&unlabeled, &answers, &m3, &cfg, encoder.as_ref()).unwrap_err();
    assert!(matches!(err, PipelineError::MissingLabels(_)), "{err}");
    assert!(!m3.exists());
}

#[test]
fn evaluation_omits_hit_without_annotations_and_checks_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 24, 0.0, 6);
    let answers = answer(dir.path(), &cfg);
    let data = dir.path().join(synth::DATASET_FILE);
    let encoder = open_encoder(&cfg).unwrap();
    let model = dir.path().join("model.json");
    run_train(&data, &answers, &model, &cfg, encoder.as_ref()).unwrap();

    let mut inputs = EvaluateInputs {
        dataset: data.clone(),
        answers: answers.clone(),
        model: Some(model.clone()),
        annotations: None,
        out_dir: dir.path().join("eval"),
        split: Split::Test,
    };
    let summary = run_evaluate(&inputs, &cfg, encoder.as_ref()).unwrap();
    assert!(summary.metrics.hit_at_10.is_none());
    assert!(dir.path().join("eval/metrics.json").exists());
    assert!(dir.path().join("eval/reports.txt").exists());

    inputs.annotations = Some(dir.path().join(synth::ANNOTATIONS_FILE));
    let summary = run_evaluate(&inputs, &cfg, encoder.as_ref()).unwrap();
    assert!(summary.metrics.hit_at_10.is_some());

    let other = PipelineConfig {
        seed: cfg.seed + 1,
        ..cfg.clone()
    };
    let err = run_evaluate(&inputs, &other, encoder.as_ref()).unwrap_err();
    assert!(matches!(err, PipelineError::HashMismatch { .. }), "{err}");
}
