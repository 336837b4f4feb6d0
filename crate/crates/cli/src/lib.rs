//! Command-line pipeline: tokenize motion clips, train count predictors,
//! generate or inpaint token grids, evaluate motions and plot CSV traces.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "momask", version, about = "Residual-token masked motion generation at desk scale")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-clip work (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write a synthetic motion suite.
    Synth {
        #[arg(long, default_value_t = 24)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        frames: usize,
        /// One of sine_walk, random_smooth, cubic, constant; cycles through all when omitted.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Train the residual tokenizer and tokenize every clip.
    Tokenize {
        /// Directory of .mot or .csv clips.
        #[arg(long)]
        motions: Option<PathBuf>,
        /// JSON map from clip name to integer label.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train base and residual count predictors from a tokenize run.
    TrainPredictor {
        /// Output directory of `tokenize`.
        #[arg(long)]
        tokens: Option<PathBuf>,
    },
    /// Generate a token grid and decode it to motion.
    Generate {
        /// Output directory of `train-predictor`.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        label: Option<u32>,
        /// Number of base tokens to generate.
        #[arg(long, default_value_t = 16)]
        length: usize,
        /// Guidance scale for every layer.
        #[arg(long = "cfg")]
        cfg_scale: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        /// Skip the unconditional branch entirely.
        #[arg(long)]
        conditional_only: bool,
        /// Token region `start:end` to regenerate; repeatable. Requires --input.
        #[arg(long, value_name = "A:B")]
        inpaint: Vec<String>,
        /// Token file to inpaint.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare predicted motions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Render CSV files as SVG line plots.
    Plot {
        /// A CSV file or a directory of them.
        #[arg(long)]
        input: PathBuf,
    },
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    let out = cli
        .common
        .out
        .clone()
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    pool.install(|| commands::dispatch(&cli.command, &mut config, &out))
}
