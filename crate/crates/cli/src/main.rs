//! `miscast` — the pipeline binary.
//!
//! One subcommand per pipeline stage, one seed per run. Exit codes:
//! 0 success, 2 bad input or configuration, 3 missing artifact,
//! 4 artifact version mismatch, 1 anything internal.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use miscast::Error;

mod artifact;
mod commands;
mod config;

#[derive(Parser)]
#[command(
    name = "miscast",
    version,
    about = "Instance-level misclassification-uncertainty estimation pipeline"
)]
struct Cli {
    /// JSON run configuration; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed of the run (required here or in the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel stages; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory receiving artifacts and manifests.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the seven complexity measures per instance, fold-aware.
    Metafeatures {
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Schema JSON; defaults to a `<stem>.schema.json` sidecar or
        /// the numeric-columns-with-trailing-class convention.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Reference folds (default 5).
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Generate complexity-targeted synthetic datasets.
    Synth {
        /// Generate the full fifteen-cell (f1, n1) grid.
        #[arg(long)]
        grid: bool,
        /// Target feature-overlap complexity in [0, 1].
        #[arg(long)]
        f1: Option<f64>,
        /// Target boundary-fraction complexity in [0, 1], at most f1.
        #[arg(long)]
        n1: Option<f64>,
        #[arg(long)]
        instances: usize,
        #[arg(long)]
        features: usize,
        #[arg(long)]
        classes: usize,
    },
    /// Build a knowledge base from datasets and a classifier family.
    Kb {
        /// Real dataset CSVs.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Synthetic dataset CSVs.
        #[arg(long, num_args = 1..)]
        synthetic: Vec<PathBuf>,
        /// Classifier kind producing the misclassification flags.
        #[arg(long)]
        model: String,
    },
    /// Tune and fit the uncertainty estimator on a knowledge base.
    Train {
        #[arg(long)]
        kb: PathBuf,
        /// Meta-feature CSV of the target task; enables knowledge-base
        /// sampling around its mean profile.
        #[arg(long)]
        anchor_meta: Option<PathBuf>,
        /// Sampled records upper bound.
        #[arg(long)]
        sample_m: Option<usize>,
        /// Sampling pool percentage.
        #[arg(long)]
        sample_q: Option<f64>,
    },
    /// Score previously profiled instances with a fitted estimator.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        /// Meta-feature CSV from the metafeatures subcommand.
        #[arg(long)]
        meta: PathBuf,
    },
    /// Nested cross-validated evaluation on one dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        kb: PathBuf,
        /// Classifier kind under evaluation.
        #[arg(long)]
        model: String,
    },
    /// Abstention sweep over a finished evaluation.
    Abstain {
        /// eval.json from the eval subcommand.
        #[arg(long)]
        eval: PathBuf,
    },
    /// Shapley attribution for one profiled instance.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// Knowledge base used as attribution background.
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        /// Instance index within the meta-feature table.
        #[arg(long)]
        index: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 bad input, 3 missing artifact, 4 version mismatch, 1 internal.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::VersionMismatch { .. } => 4,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> miscast::Result<()> {
    let resolved = config::resolve(cli.config, cli.seed, cli.threads, cli.out_dir)?;
    match cli.command {
        Command::Metafeatures { data, schema, folds } => {
            commands::metafeatures(&resolved, &data, schema.as_deref(), folds)
        }
        Command::Synth {
            grid,
            f1,
            n1,
            instances,
            features,
            classes,
        } => commands::synth(&resolved, grid, f1, n1, instances, features, classes),
        Command::Kb {
            data,
            synthetic,
            model,
        } => commands::kb(&resolved, &data, &synthetic, &model),
        Command::Train {
            kb,
            anchor_meta,
            sample_m,
            sample_q,
        } => commands::train(&resolved, &kb, anchor_meta.as_deref(), sample_m, sample_q),
        Command::Estimate { model, meta } => commands::estimate(&resolved, &model, &meta),
        Command::Eval {
            data,
            schema,
            kb,
            model,
        } => commands::eval(&resolved, &data, schema.as_deref(), &kb, &model),
        Command::Abstain { eval } => commands::abstain(&resolved, &eval),
        Command::Explain {
            model,
            kb,
            meta,
            index,
        } => commands::explain(&resolved, &model, &kb, &meta, index),
    }
}
