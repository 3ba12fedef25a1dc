//! `circumnav`: train the target estimator, run single trials and experiment
//! sweeps, and inspect weight files.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, config, missing
//! models), 2 runtime failure, 3 the run finished but some trial or training
//! episode budget diverged.

/// `println!` that tolerates a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use circumnav::Error;

/// Default output root when `--out` is not given.
pub const OUT_ENV: &str = "CIRCUMNAV_OUT";

#[derive(Parser, Debug)]
#[command(name = "circumnav", version, about = "Bearing-only circumnavigation with an LSTM target estimator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an estimator with scheduled-sampling data collection.
    Train(TrainArgs),
    /// Run one closed-loop trial and log every control step.
    Simulate(SimulateArgs),
    /// Run a named experiment sweep: constant-velocity, circle, nonholonomic, noise, fast-target.
    Sweep(SweepArgs),
    /// Print the header of a weight file and verify its checksum.
    InspectWeights {
        path: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Base preset: paper, desk or fast. Overrides the config file's `preset` key.
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML config; keys override the preset, unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 or absent: one per logical core). Outputs do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory. Default: a timestamped directory under $CIRCUMNAV_OUT, or ./runs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Bearing noise standard deviation.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Feed the estimator the perturbed bearing without renormalising it.
    #[arg(long)]
    pub raw_noisy_bearing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Args, Debug, Clone)]
#[group(id = "estimator", multiple = false)]
pub struct EstimatorArgs {
    /// Weight file of a trained estimator.
    #[arg(long, group = "estimator")]
    pub weights: Option<PathBuf>,
    /// Use ground-truth target state instead of an estimator.
    #[arg(long, group = "estimator")]
    pub oracle: bool,
    /// No estimator: hold the initial target guess, zero target velocity.
    #[arg(long, group = "estimator")]
    pub ablation: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// constant:V, circle:OMEGA[:R], nonholonomic, fixed-speed:V; prefix with
    /// `fast:` to use the fast-target gains.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Selects the target-motion and noise streams under the seed.
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// constant-velocity, circle, nonholonomic, noise or fast-target.
    pub name: String,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Number of trials for the nonholonomic, noise and fast-target sweeps.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Noise levels for the noise sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Model trained at one noise level, as SIGMA=PATH. Repeat per level.
    #[arg(long = "noise-weights")]
    pub noise_weights: Vec<String>,
    /// Write only summaries, not one CSV per trial.
    #[arg(long)]
    pub summary_only: bool,
}

/// How a command ended when it did not fail outright.
pub enum Outcome {
    Success,
    Diverged,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::ConfigParse(_)
        | Error::UnknownProfile(_)
        | Error::UnknownScenario(_)
        | Error::MissingModel(_)
        | Error::WrongWindowLength { .. } => 1,
        Error::Diverged { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::InspectWeights { path } => commands::inspect_weights(&path),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
