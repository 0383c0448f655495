//! Command-line entry point for vocabulary building, follow-up question data
//! construction, training, evaluation, self-play and gradient checks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "sfdialog", version, about = "Discriminative visual dialog ranking models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Precedence: built-in defaults, then
/// the `--config` file, then `--set`, then the dedicated flags.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Plain-text `key = value` configuration file [default: none]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Task: visdial or visdial-q [default: visdial]
    #[arg(long)]
    task: Option<String>,
    /// Context variant: q, qi or qih [default: qih]
    #[arg(long)]
    variant: Option<String>,
    /// Hidden MLP layers, 1 or 2 [default: 2]
    #[arg(long)]
    mlp_depth: Option<usize>,
    /// One word-embedding table for all encoders: on or off [default: on]
    #[arg(long)]
    shared_embeddings: Option<String>,
    /// Output path [default: none]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set l_q=64` (repeatable) [default: none]
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct DatasetArg {
    /// Dataset file [default: none]
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a vocabulary from a dataset's text.
    BuildVocab {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArg,
        /// Minimum word count [default: 1]
        #[arg(long)]
        min_count: Option<usize>,
    },
    /// Convert an answer-ranking dataset into follow-up question ranking data.
    BuildQdataset {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArg,
        /// Word vector text file [default: none]
        #[arg(long)]
        glove: Option<PathBuf>,
    },
    /// Train a model and write its best-validation checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArg,
        /// Validation dataset [default: none]
        #[arg(long)]
        val_dataset: Option<PathBuf>,
        /// Image feature file [default: none]
        #[arg(long)]
        features: Option<PathBuf>,
        /// Vocabulary file; built from the training data when absent [default: none]
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Learning rate [default: 0.001]
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Examples per minibatch [default: 32]
        #[arg(long)]
        batch_size: Option<usize>,
        /// Maximum epochs [default: 5]
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Epochs without validation improvement before stopping [default: 1]
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Rank every round's options and report the metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArg,
        /// Checkpoint to evaluate [default: none]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Image feature file [default: none]
        #[arg(long)]
        features: Option<PathBuf>,
        /// Per-round rank log [default: <out>.ranks when --out is given]
        #[arg(long)]
        rank_log: Option<PathBuf>,
    },
    /// Let a question model and an answer model talk about images.
    Unroll {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DatasetArg,
        /// Follow-up question model checkpoint [default: none]
        #[arg(long)]
        q_checkpoint: Option<PathBuf>,
        /// Answer model checkpoint [default: none]
        #[arg(long)]
        a_checkpoint: Option<PathBuf>,
        /// Image feature file [default: none]
        #[arg(long)]
        features: Option<PathBuf>,
        /// Generated rounds per transcript [default: 10]
        #[arg(long)]
        rounds: Option<usize>,
        /// Human rounds kept as the starting history [default: 1]
        #[arg(long)]
        history_rounds: Option<usize>,
        /// Number of transcripts (first images by id) [default: 20]
        #[arg(long)]
        transcripts: Option<usize>,
        /// Neighbour images feeding the option pools [default: 10]
        #[arg(long)]
        n_neighbor_images: Option<usize>,
        /// Options per pool [default: 100]
        #[arg(long)]
        pool_size: Option<usize>,
        /// Questions sampled among the best this many [default: 10]
        #[arg(long)]
        top_m: Option<usize>,
    },
    /// Compare analytic and finite-difference gradients of a reduced model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Vocabulary size [default: 50]
        #[arg(long)]
        vocab_size: Option<usize>,
        /// Options per example [default: 5]
        #[arg(long)]
        options: Option<usize>,
        /// Examples in the checked batch [default: 3]
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Write a synthetic dataset, image features and word vectors.
    Synth {
        #[command(flatten)]
        common: Common,
        /// memorize, history or image [default: memorize]
        #[arg(long)]
        family: Option<String>,
        /// Number of dialogs [default: 20]
        #[arg(long)]
        dialogs: Option<usize>,
        /// Options per round [default: 5]
        #[arg(long)]
        options: Option<usize>,
        /// Image feature width [default: 16]
        #[arg(long)]
        feature_dim: Option<usize>,
        /// Word vector width [default: 5]
        #[arg(long)]
        glove_dim: Option<usize>,
        /// First image id [default: 1]
        #[arg(long)]
        first_image_id: Option<u64>,
    },
}

fn apply_common(cfg: &mut RunConfig, c: &Common) -> anyhow::Result<()> {
    if let Some(p) = &c.config {
        cfg.merge_file(p)?;
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    let mut put = |k: &str, v: Option<String>| -> anyhow::Result<()> {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
        Ok(())
    };
    put("seed", c.seed.map(|x| x.to_string()))?;
    put("task", c.task.clone())?;
    put("variant", c.variant.clone())?;
    put("mlp_depth", c.mlp_depth.map(|x| x.to_string()))?;
    put("shared_embeddings", c.shared_embeddings.clone())?;
    put("out", c.out.as_ref().map(|p| p.display().to_string()))?;
    Ok(())
}

fn put_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> anyhow::Result<()> {
    if let Some(v) = v {
        cfg.set(key, v.to_string())?;
    }
    Ok(())
}

fn put_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> anyhow::Result<()> {
    put_opt(cfg, key, &v.as_ref().map(|p| p.display().to_string()))
}

fn resolve(command: &Command) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::defaults();
    match command {
        Command::BuildVocab { common, data, min_count } => {
            apply_common(&mut cfg, common)?;
            put_path(&mut cfg, "dataset", &data.dataset)?;
            put_opt(&mut cfg, "min_count", min_count)?;
        }
        Command::BuildQdataset { common, data, glove } => {
            apply_common(&mut cfg, common)?;
            put_path(&mut cfg, "dataset", &data.dataset)?;
            put_path(&mut cfg, "glove", glove)?;
        }
        Command::Train {
            common,
            data,
            val_dataset,
            features,
            vocab,
            learning_rate,
            batch_size,
            max_epochs,
            patience,
        } => {
            apply_common(&mut cfg, common)?;
            put_path(&mut cfg, "dataset", &data.dataset)?;
            put_path(&mut cfg, "val_dataset", val_dataset)?;
            put_path(&mut cfg, "features", features)?;
            put_path(&mut cfg, "vocab", vocab)?;
            put_opt(&mut cfg, "learning_rate", learning_rate)?;
            put_opt(&mut cfg, "batch_size", batch_size)?;
            put_opt(&mut cfg, "max_epochs", max_epochs)?;
            put_opt(&mut cfg, "patience", patience)?;
        }
        Command::Evaluate { common, data, checkpoint, features, rank_log } => {
            apply_common(&mut cfg, common)?;
            put_path(&mut cfg, "dataset", &data.dataset)?;
            put_path(&mut cfg, "checkpoint", checkpoint)?;
            put_path(&mut cfg, "features", features)?;
            put_path(&mut cfg, "rank_log", rank_log)?;
        }
        Command::Unroll {
            common,
            data,
            q_checkpoint,
            a_checkpoint,
            features,
            rounds,
            history_rounds,
            transcripts,
            n_neighbor_images,
            pool_size,
            top_m,
        } => {
            apply_common(&mut cfg, common)?;
            put_path(&mut cfg, "dataset", &data.dataset)?;
            put_path(&mut cfg, "q_checkpoint", q_checkpoint)?;
            put_path(&mut cfg, "a_checkpoint", a_checkpoint)?;
            put_path(&mut cfg, "features", features)?;
            put_opt(&mut cfg, "rounds", rounds)?;
            put_opt(&mut cfg, "history_rounds", history_rounds)?;
            put_opt(&mut cfg, "transcripts", transcripts)?;
            put_opt(&mut cfg, "n_neighbor_images", n_neighbor_images)?;
            put_opt(&mut cfg, "pool_size", pool_size)?;
            put_opt(&mut cfg, "top_m", top_m)?;
        }
        Command::Gradcheck { common, vocab_size, options, batch } => {
            apply_common(&mut cfg, common)?;
            put_opt(&mut cfg, "vocab_size", vocab_size)?;
            put_opt(&mut cfg, "options", options)?;
            put_opt(&mut cfg, "batch", batch)?;
        }
        Command::Synth {
            common,
            family,
            dialogs,
            options,
            feature_dim,
            glove_dim,
            first_image_id,
        } => {
            apply_common(&mut cfg, common)?;
            put_opt(&mut cfg, "family", family)?;
            put_opt(&mut cfg, "dialogs", dialogs)?;
            put_opt(&mut cfg, "options", options)?;
            put_opt(&mut cfg, "feature_dim", feature_dim)?;
            put_opt(&mut cfg, "glove_dim", glove_dim)?;
            put_opt(&mut cfg, "first_image_id", first_image_id)?;
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli.command)?;
    for line in cfg.render().lines() {
        eprintln!("# {line}");
    }
    match cli.command {
        Command::BuildVocab { .. } => commands::build_vocab(&cfg),
        Command::BuildQdataset { .. } => commands::build_qdataset(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Evaluate { .. } => commands::evaluate(&cfg),
        Command::Unroll { .. } => commands::unroll(&cfg),
        Command::Gradcheck { .. } => commands::gradcheck(&cfg),
        Command::Synth { .. } => commands::synth(&cfg),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("error kind=usage message={}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<sfdialog::Error>())
                .map_or("cli", |s| s.kind());
            eprintln!("error kind={kind} message={}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
