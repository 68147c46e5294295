//! The `riskvex` command line: the 1-D convexification demo, erfc-loss
//! classification, noisy-layer network training, risk-averse linear control
//! and det-max gain synthesis. Every output goes under `--out`.

pub mod commands;
pub mod common;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::common::Global;
use crate::config::Config;
use crate::error::{CliError, EXIT_INPUT};

#[derive(Debug, Parser)]
#[command(name = "riskvex", version, about = "Convexified risk-averse optimization")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample count (each subcommand has its own default).
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Suppress progress lines (warnings and errors still go to stderr).
    #[arg(long, global = true)]
    quiet: bool,
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Field, smoothed and convexified curves on a 1-D grid.
    #[command(name = "demo-1d")]
    Demo1d,
    /// Convexified erfc-loss binary classification.
    Classify {
        #[command(subcommand)]
        action: ClassifyAction,
    },
    /// Noisy-layer neural network trained as a control problem.
    Nnet {
        #[command(subcommand)]
        action: NnetAction,
    },
    /// Risk-averse linear feedback by stochastic gradient.
    Control {
        #[command(subcommand)]
        action: ControlAction,
    },
    /// Det-max gain synthesis for linear systems.
    Synth {
        #[command(subcommand)]
        action: SynthAction,
    },
}

#[derive(Debug, Subcommand)]
enum ClassifyAction {
    Train {
        /// Training set; generated blobs when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// `weights.csv` from `classify train`.
        #[arg(long)]
        weights: PathBuf,
    },
    Corrupt {
        /// Clean data; generated blobs when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum NnetAction {
    Train {
        /// Training set; a generated sine regression when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Train even when the convexity certificate fails.
        #[arg(long)]
        force: bool,
    },
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Gains directory from `nnet train`.
        #[arg(long)]
        weights: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ControlAction {
    Train {
        /// Train even when the convexity certificate fails.
        #[arg(long)]
        force: bool,
    },
    Rollout {
        /// Gains directory; zero gains when absent.
        #[arg(long)]
        gains: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum SynthAction {
    Solve {
        /// Solve even when the convexity certificate fails.
        #[arg(long)]
        force: bool,
    },
    Eval {
        /// Gains directory from `synth solve`.
        #[arg(long)]
        gains: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?;
    let g = Global { seed: cli.seed, samples: cli.samples, out: cli.out, quiet: cli.quiet };
    use commands::*;
    match cli.command {
        Command::Demo1d => demo::run(&g, cfg),
        Command::Classify { action } => match action {
            ClassifyAction::Train { data, test } => classify::train(&g, cfg, data.as_deref(), test.as_deref()),
            ClassifyAction::Eval { data, weights } => classify::eval(&g, cfg, &data, &weights),
            ClassifyAction::Corrupt { data } => classify::corrupt(&g, cfg, data.as_deref()),
        },
        Command::Nnet { action } => match action {
            NnetAction::Train { data, test, force } => nnet::train(&g, cfg, data.as_deref(), test.as_deref(), force),
            NnetAction::Eval { data, weights } => nnet::eval(&g, cfg, &data, &weights),
        },
        Command::Control { action } => match action {
            ControlAction::Train { force } => control::train(&g, cfg, force),
            ControlAction::Rollout { gains } => control::run_rollout(&g, cfg, gains.as_deref()),
        },
        Command::Synth { action } => match action {
            SynthAction::Solve { force } => synth::solve(&g, cfg, force),
            SynthAction::Eval { gains } => synth::eval(&g, cfg, &gains),
        },
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; clap's own status 2 means refusal here
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_INPUT,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
