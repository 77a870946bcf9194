//! The `rvr` command line: argument parsing, dispatch and exit codes.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use rvr_core::{Error, ErrorKind, Result};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "rvr",
    version,
    about = "Representation learning for unseen domains: data, training, evaluation and theory checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a synthetic world and sample its seen and held-out domains.
    GenWorld {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to outputs.directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model bundle on seen-domain data.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// A dataset CSV, or a directory written by gen-world.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a trained bundle on held-out (and optionally seen) data.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        /// A single-domain CSV, or a directory holding unseen.csv and
        /// domain_<id>.csv files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for argmax tie-breaking in the adversary term.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Unseen-domain accuracy against the number of seen domains.
    Kgrowth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adversary value against k on a representation-space world.
    TheoryLimit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the finite-k or worst-case bound.
    TheoryBounds {
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check invariance of a linear representation on given domains.
    TheoryInvariance {
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Color MNIST digits into a binary-labelled dataset.
    MnistColorize {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// A JSON color setting, or two-domain-<0|1>, study-<1..6>,
        /// red-green-random, solid-<color>.
        #[arg(long)]
        setting: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        shape_correlation: f64,
        /// Color-label correlation of the two-domain settings.
        #[arg(long, default_value_t = 0.9)]
        color_correlation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        domain_id: usize,
        /// Use only the first N images.
        #[arg(long)]
        count: Option<usize>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    use commands::*;
    match cli.command {
        Command::GenWorld { config, out } => gen_world(&config, out.as_deref()),
        Command::Train { config, data, out } => train_command(&config, &data, out.as_deref()),
        Command::Eval {
            bundle,
            data,
            out,
            seed,
        } => eval_command(&bundle, &data, &out, seed),
        Command::Kgrowth { config, out } => kgrowth_command(&config, out.as_deref()),
        Command::TheoryLimit { config, out } => theory_limit(&config, &out),
        Command::TheoryBounds { inputs, out } => theory_bounds(&inputs, &out),
        Command::TheoryInvariance { inputs, out } => theory_invariance(&inputs, &out),
        Command::MnistColorize {
            images,
            labels,
            setting,
            out,
            shape_correlation,
            color_correlation,
            seed,
            domain_id,
            count,
        } => mnist_colorize(
            &ColorizeArgs {
                images,
                labels,
                setting,
                shape_correlation,
                color_correlation,
                seed,
                domain_id,
                count,
            },
            &out,
        ),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}
