//! `d2v`: generate synthetic domains, train and evaluate models, run the
//! accuracy sweep and random search, and emit similarity matrices.
//!
//! Exit codes: 0 on success, 1 for invalid flags, inputs or configs, 2 for
//! runtime failures (I/O, numerical blow-up).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use d2v_core::model::Method;
use d2v_core::nn::Activation;
use d2v_core::similarity::Bandwidth;
use d2v_core::trainer::{ExperimentConfig, TaskBatch};

pub mod commands;
pub mod error;
pub mod inputs;
pub mod manifest;

pub use error::{CliError, CliResult};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "d2v", version, about = "Domain embedding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write rotated synthetic domains as CSV.
    GenSynth(GenSynthArgs),
    /// Train a model on labeled source domains.
    Train(TrainArgs),
    /// Score a checkpoint on labeled domains.
    Eval(EvalArgs),
    /// Accuracy grid over domain and example counts.
    Sweep(SweepArgs),
    /// Random hyperparameter search scored on held-out domains.
    Search(SearchArgs),
    /// Estimated, known and random domain similarity matrices.
    Similarity(SimilarityArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, required_unless_present = "test_suite", value_parser = clap::value_parser!(u64).range(1..))]
    pub domains: Option<u64>,
    #[arg(long, required_unless_present = "test_suite", value_parser = clap::value_parser!(u64).range(1..))]
    pub examples: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// The fixed 44 x 1024 evaluation suite instead of training domains.
    #[arg(long, conflicts_with_all = ["domains", "examples"])]
    pub test_suite: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Flags that override fields of the config file.
#[derive(Debug, Args, Default)]
pub struct ConfigOverrides {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub task_hidden: Option<usize>,
    #[arg(long)]
    pub main_hidden: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub main_batch: Option<usize>,
    /// `all` or a number of points.
    #[arg(long)]
    pub task_batch: Option<TaskBatch>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub activation: Option<Activation>,
}

impl ConfigOverrides {
    pub fn apply(&self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            lr,
            weight_decay,
            task_hidden,
            main_hidden,
            embedding_dim,
            main_batch,
            task_batch,
            epochs,
            seed,
            activation
        );
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// A directory holding `data.csv`, or a CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON config with a `schema_version` field.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Labeled domains scored after every epoch.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = d2v_core::trainer::sweep::DEFAULT_DOMAIN_COUNTS)]
    pub domains: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = d2v_core::trainer::sweep::DEFAULT_EXAMPLE_COUNTS)]
    pub examples: Vec<usize>,
    /// Repetitions averaged per cell.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Train each cell for about this many steps instead of a fixed epoch count.
    #[arg(long)]
    pub step_budget: Option<usize>,
    /// Base training config. Its `seed` (or `--seed`) is the master seed of
    /// the sweep; each repetition derives its own.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// JSON search space.
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Validation domains; by default a fifth of the sources is held out.
    #[arg(long)]
    pub validation_data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Kernel bandwidth: `auto` (median heuristic) or a positive number.
    #[arg(long, default_value = "auto")]
    pub sigma: Bandwidth,
    /// `domain,theta` CSV; defaults to `thetas.csv` next to the data.
    #[arg(long)]
    pub thetas: Option<PathBuf>,
    /// Seed of the random reference matrix.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("D2V_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "D2V_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    // a pool may already exist when commands run in-process more than once
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let argv: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match configure_threads().and_then(|()| commands::dispatch(cli.command, &argv)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
