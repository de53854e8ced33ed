//! `moqe`: train and evaluate quantum-expert mixtures and the classical
//! baselines on MNIST parity.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{BaselineKind, GradcheckOptions};
use config::Overrides;

#[derive(Parser)]
#[command(name = "moqe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the four IDX files: presence, magic, counts, SHA-256
    VerifyData {
        #[arg(long, default_value = "data/mnist")]
        data_dir: PathBuf,
    },
    /// Initialize, calibrate and train a mixture; writes a run directory
    Train(Overrides),
    /// Accuracy and output histograms of a saved checkpoint
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training images to score (0 skips train accuracy)
        #[arg(long)]
        train_subset: Option<usize>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Where histograms.csv goes; defaults to the checkpoint's directory
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare adjoint, parameter-shift and finite-difference gradients
    Gradcheck {
        #[command(flatten)]
        run: Overrides,
        /// Number of random (parameters, image) configurations
        #[arg(long, default_value_t = 20)]
        configs: usize,
        /// Negate the adjoint gradient; the check must then fail
        #[arg(long, hide = true)]
        inject_sign_error: bool,
    },
    /// Train the quadratic classifier or a small CNN
    Baseline {
        kind: BaselineKind,
        #[command(flatten)]
        run: Overrides,
        /// CNN channels per stage, e.g. 8,8,8,8
        #[arg(long = "c", value_delimiter = ',')]
        channels: Option<Vec<usize>>,
        /// CNN hidden width
        #[arg(long = "h")]
        hidden: Option<usize>,
    },
}

fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::VerifyData { data_dir } => Ok(commands::verify_data(&data_dir)),
        Command::Train(o) => {
            let cfg = o.resolve("train")?;
            init_threads(cfg.threads)?;
            commands::train_cmd(cfg)?;
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            train_subset,
            data_dir,
            out_dir,
            threads,
        } => {
            let cfg = Overrides {
                train_subset,
                data_dir,
                threads,
                ..Default::default()
            }
            .resolve("eval")?;
            init_threads(cfg.threads)?;
            commands::eval_cmd(&checkpoint, &cfg, out_dir)?;
            Ok(true)
        }
        Command::Gradcheck {
            run,
            configs,
            inject_sign_error,
        } => {
            let cfg = run.resolve("gradcheck")?;
            init_threads(cfg.threads)?;
            commands::gradcheck_cmd(
                &cfg,
                &GradcheckOptions {
                    configs,
                    inject_sign_error,
                },
            )
        }
        Command::Baseline {
            kind,
            run,
            channels,
            hidden,
        } => {
            let mut cfg = run.resolve(match kind {
                BaselineKind::Quad => "baseline-quad",
                BaselineKind::Cnn => "baseline-cnn",
            })?;
            if let Some(c) = channels {
                cfg.channels = c.try_into().map_err(|_| anyhow::anyhow!("--c takes four channel counts"))?;
            }
            if let Some(h) = hidden {
                cfg.hidden = h;
            }
            init_threads(cfg.threads)?;
            commands::baseline_cmd(kind, cfg)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
