//! `skelcon`: synthetic data, contrastive pretraining, evaluation and
//! augmentation previews.
//!
//! Settings resolve as built-in defaults, then the `--config` TOML file, then
//! flags. Exit codes: 0 success, 2 invalid input or config, 3 numerical
//! divergence, 4 I/O failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AugmentArgs, EvalArgs, EvalMode, Preset, PretrainArgs, SynthArgs};
use config::{install_workers, Overrides, RunConfig};
use error::Result;

#[derive(Parser)]
#[command(
    name = "skelcon",
    version,
    about = "Contrastive pretraining on 3D skeleton sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training split (JSONL).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Generator settings; the config file's [synth] table when omitted.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a held-out split here.
        #[arg(long, requires = "test_per_class")]
        test_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        test_per_class: usize,
    },
    /// Contrastive pretraining into a run directory.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Parent of the run directories.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Augmentation pipeline, e.g. "reverse,shear".
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        paradigm: Option<String>,
        /// Stop after this many epochs, leaving a resumable checkpoint.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Continue from the run directory's checkpoint.
        #[arg(long, conflicts_with = "force")]
        resume: bool,
        /// Restart even if the run directory already holds a run.
        #[arg(long)]
        force: bool,
    },
    /// Linear, semi-supervised and comparison evaluations.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "linear")]
        mode: EvalMode,
        /// Trainer checkpoint from `pretrain`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Held-out split (JSONL).
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// Labeled fractions for semi-supervised mode.
        #[arg(long, value_delimiter = ',')]
        fraction: Vec<f64>,
        #[arg(long)]
        representation: Option<String>,
        /// Pipeline used for pretraining in paradigm mode.
        #[arg(long)]
        strategy: Option<String>,
        /// Output directory for metrics.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply an augmentation pipeline to a dataset and log sampled parameters.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: String,
        /// Augmented dataset (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Parameter log; defaults next to the output.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Only the first N sequences.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn resolve(common: &Common, extra: Overrides) -> Result<RunConfig> {
    let o = Overrides {
        seed: common.seed,
        data: common.data.clone(),
        workers: common.workers,
        ..extra
    };
    let cfg = RunConfig::resolve(common.config.as_deref(), &o)?;
    install_workers(cfg.workers);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            preset,
            out,
            test_out,
            test_per_class,
        } => {
            let cfg = resolve(&common, Overrides::default())?;
            commands::synth(
                &cfg,
                &SynthArgs {
                    preset,
                    out,
                    test_out,
                    test_per_class,
                },
            )
        }
        Command::Pretrain {
            common,
            out,
            strategy,
            paradigm,
            stop_after,
            resume,
            force,
        } => {
            let cfg = resolve(
                &common,
                Overrides {
                    out,
                    strategy,
                    paradigm,
                    ..Default::default()
                },
            )?;
            let dir = commands::pretrain(
                &cfg,
                &PretrainArgs {
                    stop_after,
                    resume,
                    force,
                },
            )?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Eval {
            common,
            mode,
            checkpoint,
            test_data,
            fraction,
            representation,
            strategy,
            out,
        } => {
            let cfg = resolve(
                &common,
                Overrides {
                    test_data,
                    representation,
                    strategy,
                    ..Default::default()
                },
            )?;
            let dir = commands::eval(
                &cfg,
                &EvalArgs {
                    mode,
                    checkpoint,
                    fractions: fraction,
                    out,
                },
            )?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Augment {
            common,
            strategy,
            out,
            log,
            limit,
        } => {
            let cfg = resolve(&common, Overrides::default())?;
            let pipeline = strategy.parse().map_err(error::CliError::from)?;
            let log = commands::augment(
                &cfg,
                &AugmentArgs {
                    pipeline,
                    out,
                    log,
                    limit,
                },
            )?;
            println!("{}", log.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
