mod cli;

use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use decontext_core::pipeline::{
    self, synth, EvaluateInputs, PipelineConfig, SourceKind, Split, StageOutcome,
};

use cli::{Args, Command, SynthArgs};

const EXIT_PARTIAL: u8 = 1;
const EXIT_FATAL: u8 = 2;

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(args) {
        Ok(outcome) if outcome.is_partial() => {
            for f in &outcome.failures {
                eprintln!("decontext: {}: {}", f.sample, f.reason);
            }
            eprintln!(
                "decontext: {} written, {} failed",
                outcome.written,
                outcome.failures.len()
            );
            ExitCode::from(EXIT_PARTIAL)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("decontext: {e:#}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}

fn load_config(args: &Args) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn use_fixture_embeddings(cfg: &mut PipelineConfig, path: Option<std::path::PathBuf>) {
    if let Some(path) = path {
        cfg.encoder.kind = SourceKind::Fixture;
        cfg.encoder.fixture = Some(path);
    }
}

fn run(args: Args) -> anyhow::Result<StageOutcome> {
    let mut cfg = load_config(&args)?;
    match args.command {
        Command::Extract { dataset, out } => Ok(pipeline::run_extract(&dataset, &out, &cfg)?),
        Command::Answer {
            queries,
            out,
            oracle,
        } => {
            if let Some(fixture) = oracle.fixture {
                cfg.oracle.backend = SourceKind::Fixture;
                cfg.oracle.fixture = Some(fixture);
            }
            if oracle.cache.is_some() {
                cfg.oracle.cache = oracle.cache;
            }
            let backend = pipeline::open_backend(&cfg)?;
            let cache = pipeline::open_cache(&cfg)?;
            Ok(pipeline::run_answer(&queries, &out, &cfg, backend.as_ref(), &cache)?)
        }
        Command::Train {
            dataset,
            answers,
            embeddings,
            out,
        } => {
            use_fixture_embeddings(&mut cfg, embeddings);
            let encoder = pipeline::open_encoder(&cfg)?;
            let summary = pipeline::run_train(&dataset, &answers, &out, &cfg, encoder.as_ref())?;
            if let Some(training) = &summary.model.training {
                log::info!("training accuracy {:.4}", training.training_accuracy);
            }
            Ok(summary.outcome)
        }
        Command::Evaluate {
            dataset,
            answers,
            model,
            no_ranker,
            embeddings,
            annotations,
            split,
            out,
        } => {
            let split: Split = split.parse()?;
            use_fixture_embeddings(&mut cfg, embeddings);
            // Without a model the encoder is never consulted.
            let encoder: Box<dyn decontext_core::Encoder> = if no_ranker {
                Box::new(decontext_core::ranker::FixtureEncoder::default())
            } else {
                pipeline::open_encoder(&cfg)?
            };
            let inputs = EvaluateInputs {
                dataset,
                answers,
                model,
                annotations,
                out_dir: out,
                split,
            };
            let summary = pipeline::run_evaluate(&inputs, &cfg, encoder.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&summary.metrics)?);
            Ok(summary.outcome)
        }
        Command::Synth(s) => {
            let config = synth_config(&s, args.seed.unwrap_or(0))?;
            let summary = synth::generate(&config, &s.out)
                .with_context(|| format!("writing synthetic set to {}", s.out.display()))?;
            log::info!(
                "{} samples, {} queries, flip fraction {:.4}",
                summary.samples,
                summary.queries,
                summary.flip_fraction
            );
            Ok(StageOutcome {
                written: summary.samples,
                failures: Vec::new(),
            })
        }
    }
}

fn synth_config(s: &SynthArgs, seed: u64) -> anyhow::Result<synth::SynthConfig> {
    let parts: Vec<u32> = s
        .split
        .split(':')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .with_context(|| format!("--split {:?} is not of the form a:b:c", s.split))?;
    let [train, val, test] = parts[..] else {
        bail!("--split {:?} must have three parts", s.split);
    };
    Ok(synth::SynthConfig {
        size: s.size,
        noise: s.noise,
        seed,
        dim: s.dim,
        distractor_rate: s.distractor_rate,
        split: [train, val, test],
        ..Default::default()
    })
}
