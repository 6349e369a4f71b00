//! `xdloc`: batch driver for dataset synthesis, staged training, indexing,
//! localization and evaluation.
//!
//! Exit codes: 0 success, 1 runtime failure (one `E_*: message` line on
//! standard error), 2 usage error.

mod commands;
mod config;
mod dataset;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xdloc::{Error, Result};

use commands::{PlotArgs, QueryArgs};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "xdloc", version, about = "Image-to-range place recognition on synthetic worlds", after_help = config::key_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Query {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Index file written by `index`.
    #[arg(long)]
    index: PathBuf,
    /// Descriptor checkpoint.
    #[arg(long)]
    descriptor: PathBuf,
    /// Transfer checkpoint (needed when desc.visual = transfer).
    #[arg(long)]
    transfer: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a world, trajectory, paired images/ranges and yawed queries.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the image-to-range transfer module.
    TrainTransfer {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the place descriptor (and optionally fine-tune jointly).
    TrainDescriptor {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        transfer: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Describe every place's range projection into a retrieval index.
    Index {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        descriptor: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fuse drifting odometry with retrieval fixes along the query sequence.
    Localize {
        #[command(flatten)]
        query: Query,
        #[command(flatten)]
        common: Common,
    },
    /// Recall of image queries against the index.
    EvalRecall {
        #[command(flatten)]
        query: Query,
        #[command(flatten)]
        common: Common,
    },
    /// Absolute pose error of an estimated trajectory.
    EvalApe {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// k-means clustering of a descriptor file.
    Cluster {
        #[arg(long)]
        descriptors: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render a distance matrix, loss logs or a rotation sweep to PNG.
    Plot {
        #[arg(long)]
        distances: Option<PathBuf>,
        /// Loss log; repeatable.
        #[arg(long = "loss")]
        losses: Vec<PathBuf>,
        #[arg(long)]
        rotation: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn prepare(common: &Common) -> Result<(RunConfig, &Path)> {
    let cfg = RunConfig::load(common.config.as_deref(), &common.set, common.seed)?;
    fs::create_dir_all(&common.out)?;
    cfg.write(&common.out)?;
    Ok((cfg, &common.out))
}

fn query_args(q: &Query) -> QueryArgs<'_> {
    QueryArgs {
        data: &q.data,
        index: &q.index,
        descriptor: &q.descriptor,
        transfer: q.transfer.as_deref(),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { common } => {
            let (cfg, out) = prepare(&common)?;
            commands::synth(&cfg, out)
        }
        Command::TrainTransfer { data, common } => {
            let (cfg, out) = prepare(&common)?;
            commands::train_transfer_cmd(&cfg, &data, out)
        }
        Command::TrainDescriptor { data, transfer, common } => {
            let (cfg, out) = prepare(&common)?;
            commands::train_descriptor_cmd(&cfg, &data, transfer.as_deref(), out)
        }
        Command::Index { data, descriptor, common } => {
            let (_, out) = prepare(&common)?;
            commands::index(&data, &descriptor, out)
        }
        Command::Localize { query, common } => {
            let (cfg, out) = prepare(&common)?;
            commands::localize(&cfg, &query_args(&query), out)
        }
        Command::EvalRecall { query, common } => {
            let (cfg, out) = prepare(&common)?;
            commands::eval_recall(&cfg, &query_args(&query), out)
        }
        Command::EvalApe { estimate, gt, common } => {
            let (_, out) = prepare(&common)?;
            commands::eval_ape(&estimate, &gt, out)
        }
        Command::Cluster { descriptors, common } => {
            let (cfg, out) = prepare(&common)?;
            commands::cluster(&cfg, &descriptors, out)
        }
        Command::Plot {
            distances,
            losses,
            rotation,
            common,
        } => {
            let (_, out) = prepare(&common)?;
            let args = PlotArgs {
                distances: distances.as_deref(),
                losses: &losses,
                rotation: rotation.as_deref(),
            };
            commands::plot_cmd(&args, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                Error::Config(m) | Error::Data(m) | Error::Train(m) | Error::Eval(m) => m.clone(),
                other => other.to_string(),
            };
            eprintln!("{}: {}", e.code(), msg.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
