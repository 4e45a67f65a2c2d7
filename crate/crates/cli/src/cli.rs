use std::path::PathBuf;

use clap::{Args as ClapArgs, Parser, Subcommand};

/// Interpretable out-of-context image-caption detector.
#[derive(Debug, Parser)]
#[command(name = "decontext", version)]
pub struct Args {
    /// Pipeline config (JSON or TOML). Relative paths inside it resolve
    /// against the config's own directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config seed. For `synth` this seeds the generator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn caption graphs into rendered queries.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer every query against its image.
    Answer {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        oracle: OracleOverrides,
    },
    /// Fit the query ranker on the train split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        /// Fixture embeddings; overrides the configured encoder.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce verdicts, evidence reports and metrics for one split.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long, required_unless_present = "no_ranker", conflicts_with = "no_ranker")]
        model: Option<PathBuf>,
        /// Score every query 0.5, so evidence falls back to query order.
        #[arg(long)]
        no_ranker: bool,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a planted-truth synthetic dataset with matching fixtures.
    Synth(SynthArgs),
}

#[derive(Debug, ClapArgs)]
pub struct OracleOverrides {
    /// Fixture score table; switches the oracle to the fixture backend.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Answer cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, ClapArgs)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub size: usize,
    /// Oracle flip probability, in [0, 0.5).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Share of Real samples given one planted-No distractor query.
    #[arg(long, default_value_t = 0.0)]
    pub distractor_rate: f64,
    /// Train:val:test ratio.
    #[arg(long, default_value = "10:1:1")]
    pub split: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
