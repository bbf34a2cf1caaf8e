mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad flags, config keys or file contents detected before any compute.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "ipot", version, about = "Inducing-point operator transformer: data, training, evaluation, benchmarks")]
pub struct Cli {
    /// Flat `key = value` config file, applied after the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named preset: burgers, darcy, heat-rollout or smoke.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// `KEY=VALUE` config override; may repeat.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for every artifact.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true, env = "IPOT_THREADS")]
    pub threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint, optionally under input transforms.
    Eval(EvalArgs),
    /// Time forward passes over a size ladder.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// burgers, darcy or heat.
    #[arg(long)]
    pub problem: Option<String>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid points per dimension.
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Frames per heat trajectory.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from this checkpoint, including optimiser state and epoch.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Keep this fraction of input points.
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Keep only a region of the input: `half` or `other-half`.
    #[arg(long)]
    pub mask: Option<String>,
    /// Interpolate inputs onto an R^d lattice.
    #[arg(long)]
    pub regrid: Option<usize>,
    /// test, train or all.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 4000, 16000, 64000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 2)]
    pub warmups: usize,
    /// Latent count; defaults to the configured model's.
    #[arg(long)]
    pub nz: Option<usize>,
    /// Also time the model with the inducing points removed.
    #[arg(long)]
    pub quadratic_baseline: bool,
    #[arg(long, default_value_t = 16_384)]
    pub quadratic_cap: usize,
    /// Train one model per `--nz-list` entry on this dataset and report
    /// error and runtime for each.
    #[arg(long)]
    pub ablation_data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128, 256, 512])]
    pub nz_list: Vec<usize>,
}

/// 2 usage, 3 numeric failure, 4 I/O; anything unclassified is 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ipot::Error>() {
            return match e {
                ipot::Error::Usage(_) | ipot::Error::Config(_) | ipot::Error::Shape { .. } => 2,
                ipot::Error::Numeric(_) | ipot::Error::Solver(_) => 3,
                ipot::Error::Io { .. } | ipot::Error::Format { .. } => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
