//! `msafnet`: synthetic data, training, prediction, evaluation and analysis.
//!
//! Exit status: 0 on success, 1 when a computation or output write fails,
//! 2 for usage, config or input-data errors.

mod commands;
mod error;
mod manifest;
mod overlay;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Overrides;
use error::{CliError, CliResult};
use settings::{KeyDecl, Settings};

#[derive(Parser, Debug)]
#[command(name = "msafnet", version, about = "Driver attention prediction for accident scenarios")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Plain-text `key=value` settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a deterministic synthetic accident dataset.
    Synth {
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Train a model and write its checkpoint and loss trace.
    Train {
        #[arg(long)]
        data: Option<String>,
        /// vision, early or late.
        #[arg(long)]
        mode: Option<String>,
        /// Frame size in pixels, 64 or 256.
        #[arg(long)]
        resolution: Option<String>,
        /// full or narrow layer widths.
        #[arg(long)]
        width: Option<String>,
        /// all, train, val or test.
        #[arg(long)]
        split: Option<String>,
        /// Step cap, or `none`.
        #[arg(long)]
        max_steps: Option<String>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Write one attention map per frame with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        out: Option<String>,
        /// Also write heatmaps blended over the RGB frames.
        #[arg(long)]
        overlay: bool,
    },
    /// Score predicted maps against ground truth.
    Eval {
        #[arg(long)]
        pred: Option<String>,
        /// Dataset directory holding the ground-truth maps.
        #[arg(long)]
        gt: Option<String>,
        /// Restrict scoring to the videos annotated here.
        #[arg(long)]
        ann: Option<String>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Frame delay between the accident window start and the first attention hit.
    Adf {
        /// Per-video map directories (predictions or a dataset).
        #[arg(long)]
        maps: Option<String>,
        #[arg(long)]
        ann: Option<String>,
        /// human_gt or model.
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Frame counts before, inside and after the accident window.
    Stats {
        #[arg(long)]
        ann_dir: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Average ground-truth attention per behavior type.
    Avgmap {
        #[arg(long)]
        data: Option<String>,
        /// A behavior type, or `all`.
        #[arg(long)]
        behavior: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Category-stratified train/validation/test partition.
    Split {
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
}

type Runner = fn(&Settings) -> CliResult<()>;

fn plan(command: Command) -> (&'static [KeyDecl], Overrides, Runner) {
    use commands::*;
    match command {
        Command::Synth { out, seed } => (SYNTH_KEYS, vec![("out", out), ("seed", seed)], synth),
        Command::Train { data, mode, resolution, width, split, max_steps, out, seed } => (
            TRAIN_KEYS,
            vec![
                ("data", data),
                ("mode", mode),
                ("resolution", resolution),
                ("width", width),
                ("split", split),
                ("max_steps", max_steps),
                ("out", out),
                ("seed", seed),
            ],
            train_cmd,
        ),
        Command::Predict { checkpoint, data, out, overlay } => (
            PREDICT_KEYS,
            vec![
                ("checkpoint", checkpoint),
                ("data", data),
                ("out", out),
                ("overlay", overlay.then(|| "true".to_string())),
            ],
            predict,
        ),
        Command::Eval { pred, gt, ann, out, seed } => {
            (EVAL_KEYS, vec![("pred", pred), ("gt", gt), ("ann", ann), ("out", out), ("seed", seed)], eval)
        }
        Command::Adf { maps, ann, source, out } => {
            (ADF_KEYS, vec![("maps", maps), ("ann", ann), ("source", source), ("out", out)], adf)
        }
        Command::Stats { ann_dir, out } => (STATS_KEYS, vec![("ann_dir", ann_dir), ("out", out)], stats),
        Command::Avgmap { data, behavior, out } => {
            (AVGMAP_KEYS, vec![("data", data), ("behavior", behavior), ("out", out)], avgmap)
        }
        Command::Split { data, out, seed } => (SPLIT_KEYS, vec![("data", data), ("out", out), ("seed", seed)], split),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(CliError::failure)?;
    }
    let (keys, overrides, runner) = plan(cli.command);
    let settings = Settings::resolve(keys, cli.common.config.as_deref(), &overrides)?;
    runner(&settings)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
