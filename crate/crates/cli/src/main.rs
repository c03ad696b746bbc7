//! Command-line surface of the manifold-based test generator.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::analyze::{cmd_fid, cmd_latent_scatter};
use commands::generate::{cmd_generate, GeneratePaths};
use commands::resolve_out_dir;
use commands::review::{cmd_export, cmd_review};
use commands::train::{cmd_train_classifier, cmd_train_vae, StageSelection};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "mtgen",
    about = "Generate realistic, fault-revealing test cases for small image \
             classifiers by sampling or searching a two-stage conditional \
             VAE's latent manifold",
    version
)]
struct Cli {
    /// Key-value configuration file (defaults apply without one).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set vae1.latent_dim=2.
    /// Repeatable; later entries win.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Override the master seed (shorthand for --set seed=N).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; defaults to a stamped directory under runs/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Allow writing into an existing non-empty output directory.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the conditional VAE stages (stage 1, then stage 2 on its
    /// encodings).
    TrainVae {
        /// Which stages to train: both, 1, or 2.
        #[arg(long, default_value = "both")]
        stage: String,
        /// Existing stage-1 checkpoint, required when training stage 2
        /// alone.
        #[arg(long)]
        stage1_checkpoint: Option<PathBuf>,
    },
    /// Train a dropout-bearing classifier (model under test, oracle, or
    /// feature extractor, depending on the seed and your bookkeeping).
    TrainClassifier,
    /// Generate a fault-revealing test suite from trained checkpoints.
    Generate {
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long)]
        stage2: PathBuf,
        /// The model under test.
        #[arg(long)]
        classifier: PathBuf,
        /// Feature classifier for the realism score; must not be the model
        /// under test.
        #[arg(long)]
        extractor: PathBuf,
    },
    /// Fréchet distance between two image sets under a feature extractor.
    Fid {
        #[arg(long)]
        extractor: PathBuf,
        /// Reference set: synth | idx:IMG,LBL | suite:DIR | noise:COUNT.
        #[arg(long)]
        real: String,
        /// Compared set, same grammar.
        #[arg(long)]
        generated: String,
    },
    /// Export (z1, z2, class) triples of the validation set under a κ = 2
    /// stage-1 encoder.
    LatentScatter {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Apply a human verdict file to a generated suite.
    Review {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        verdicts: PathBuf,
    },
    /// Re-render a suite (images, sheets, manifest) into a new directory.
    Export {
        #[arg(long)]
        suite: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> mtgen_core::Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = RunConfig::resolve(cli.config.as_deref(), &overrides)?;

    match &cli.command {
        Command::TrainVae {
            stage,
            stage1_checkpoint,
        } => {
            let selection = StageSelection::parse(stage)?;
            let out = resolve_out_dir(cli.out.as_deref(), cli.force, "train-vae")?;
            cmd_train_vae(&config, &out, selection, stage1_checkpoint.as_deref())
        }
        Command::TrainClassifier => {
            let out = resolve_out_dir(cli.out.as_deref(), cli.force, "train-classifier")?;
            cmd_train_classifier(&config, &out)
        }
        Command::Generate {
            stage1,
            stage2,
            classifier,
            extractor,
        } => {
            let out = resolve_out_dir(cli.out.as_deref(), cli.force, "generate")?;
            cmd_generate(
                &config,
                &out,
                &GeneratePaths {
                    stage1,
                    stage2,
                    classifier,
                    extractor,
                },
            )
        }
        Command::Fid {
            extractor,
            real,
            generated,
        } => {
            let out = resolve_out_dir(cli.out.as_deref(), cli.force, "fid")?;
            cmd_fid(&config, &out, extractor, real, generated)
        }
        Command::LatentScatter { checkpoint } => {
            let out = resolve_out_dir(cli.out.as_deref(), cli.force, "latent-scatter")?;
            cmd_latent_scatter(&config, &out, checkpoint)
        }
        Command::Review { suite, verdicts } => cmd_review(suite, verdicts),
        Command::Export { suite } => {
            let out = resolve_out_dir(cli.out.as_deref(), cli.force, "export")?;
            cmd_export(suite, &out)
        }
    }
}
