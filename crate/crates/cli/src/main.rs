//! Command-line front end: data generation, training, sampling, evaluation
//! and the verification battery.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 verification failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Failure;
use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "vpbridge", version, about = "Stochastic-bridge video object removal on synthetic data")]
struct Cli {
    /// Flat `key = value` config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set total_steps=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Normal,
    Large,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic triplets and a manifest to `dataset_dir`.
    GenData {
        /// Number of triplets.
        #[arg(long)]
        count: u64,
        #[arg(long, value_enum, default_value = "normal")]
        variant: VariantArg,
    },
    /// Train on every triplet listed in the manifest; writes the checkpoint and a loss CSV beside it.
    Train,
    /// Remove the object from one clip and append its metrics to `dataset_dir/metrics.csv`.
    Sample {
        /// Dataset index, or a path to a source tensor file.
        #[arg(long)]
        input: String,
        /// Mask tensor for a path input; defaults to an empty mask.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Inference steps; defaults to `steps_infer`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Print metrics for existing outputs in `dataset_dir` as CSV.
    Eval {
        /// Dataset index; all indices with an output file when omitted.
        #[arg(long)]
        input: Option<u64>,
    },
    /// Run the invariant battery.
    Verify {
        /// Run a single check by name.
        #[arg(long)]
        only: Option<String>,
        /// Deliberately break the forward marginal to show the battery catches it.
        #[arg(long)]
        inject_flip_c: bool,
    },
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(Failure::Usage)?,
        None => Config::default(),
    };
    for pair in &cli.overrides {
        cfg.apply_pair(pair).map_err(Failure::Usage)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::GenData { count, variant } => {
            let variant = match variant {
                VariantArg::Normal => vpbridge::Variant::Normal,
                VariantArg::Large => vpbridge::Variant::Large,
            };
            commands::gen_data(&cfg, count, variant)
        }
        Command::Train => commands::train(&cfg),
        Command::Sample { input, mask, steps } => commands::sample(&cfg, &input, mask.as_deref(), steps),
        Command::Eval { input } => commands::eval(&cfg, input),
        Command::Verify { only, inject_flip_c } => commands::verify(&cfg, only.as_deref(), inject_flip_c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
