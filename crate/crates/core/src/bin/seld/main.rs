mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seld::labels::DistanceUnit;
use seld::SeldError;

/// Stereo sound event localization and detection.
#[derive(Parser, Debug)]
#[command(name = "seld", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// TOML run configuration (see `seld print-config`); built-in defaults
    /// when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset: `audio/*.wav` plus `metadata/*.csv`.
    Synth {
        /// Dataset root to create.
        #[arg(long)]
        out: PathBuf,
        /// Number of clips; replaces `data.synth.n_clips`.
        #[arg(long)]
        clips: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Extract one feature file per segment from every WAV in a directory
    /// (or its `audio/` subdirectory).
    Features {
        /// Directory of stereo WAVs.
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for `.feat` files and `errors.csv`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train on a dataset root and write `log.csv`, `best.ckpt`, `last.ckpt`.
    Train {
        /// TOML run configuration; every key must be present.
        #[arg(long)]
        config: PathBuf,
        /// Dataset root with `audio/` and `metadata/`.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoints, log and the resolved config.
        #[arg(long)]
        out: PathBuf,
        /// Add left/right-swapped copies of every training segment.
        #[arg(long)]
        acs: bool,
        /// Replaces `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write one prediction CSV per WAV using a checkpoint.
    Infer {
        /// Checkpoint written by `train`.
        #[arg(long)]
        ckpt: PathBuf,
        /// Directory of stereo WAVs (or a dataset root with `audio/`).
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for `<stem>.csv` predictions.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score prediction CSVs against reference CSVs with matching names.
    Eval {
        /// Directory of prediction CSVs.
        #[arg(long)]
        pred: PathBuf,
        /// Reference directory, or a dataset root with `metadata/`.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Report path; the per-class CSV is written next to it.
        #[arg(long, default_value = "metrics.txt")]
        out: PathBuf,
        /// Unit of the reference distance column.
        #[arg(long, value_enum, default_value_t = DistanceUnit::Meters)]
        distance_unit: DistanceUnit,
    },
    /// Time the selective scan at several sequence lengths.
    BenchScan {
        /// Comma-separated sequence lengths.
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        /// Timed runs per length.
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        /// Also write the timing CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print trainable parameters and multiply-accumulates of a model.
    Count {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Input frames for the MAC estimate; defaults to one segment.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Print a complete configuration file.
    PrintConfig {
        /// The miniature model and short schedule instead of the default.
        #[arg(long)]
        toy: bool,
    },
}

/// 2 for numerical failures, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let numeric = e
        .chain()
        .any(|c| matches!(c.downcast_ref::<SeldError>(), Some(SeldError::NonFinite(_))));
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth { out, clips, seed, cfg } => commands::synth(&out, clips, seed, &cfg),
        Command::Features { input, out, cfg } => commands::features(&input, &out, &cfg),
        Command::Train {
            config,
            data,
            out,
            acs,
            seed,
            set,
        } => commands::train(&config, &set, &data, &out, acs, seed),
        Command::Infer { ckpt, input, out, cfg } => commands::infer(&ckpt, &input, &out, &cfg),
        Command::Eval {
            pred,
            reference,
            out,
            distance_unit,
        } => commands::eval(&pred, &reference, &out, distance_unit),
        Command::BenchScan { lengths, repeat, out } => commands::bench_scan(&lengths, repeat, out.as_deref()),
        Command::Count { cfg, frames } => commands::count(&cfg, frames),
        Command::PrintConfig { toy } => commands::print_config(toy),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
