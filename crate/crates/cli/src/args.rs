use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "pert", version, about = "Permuted language model pre-training lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Run configuration: built-in defaults, then `--preset`, then the
/// `--config` file, then flags and `KEY=VALUE` overrides.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML file with run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Total optimizer steps.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, value_parser = ["tiny", "small"])]
    pub preset: Option<String>,
    /// Plain-text corpus (sets data.corpus).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Vocabulary file (sets data.vocab).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Dotted-key overrides such as masking.granularity=sentence.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate PerLM instances and corpus statistics.
    Prepare {
        #[command(flatten)]
        run: RunArgs,
        /// Fraction of words selected per sequence.
        #[arg(long)]
        select_ratio: Option<f64>,
    },
    /// Pre-train an encoder.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from a checkpoint manifest; the run configuration is
        /// taken from the checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train every variant of one or all ablation suites.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "all", value_parser = ["all", "granularity", "space", "scope"])]
        suite: String,
    },
    /// Corrupt sentences (one per line) and write BIEO-labeled records.
    WorCorrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label WordPiece tokens of this vocabulary instead of words.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        max_spans: usize,
        #[arg(long, default_value_t = 3)]
        max_context: usize,
        #[arg(long, default_value = "cjk", value_parser = ["cjk", "whitespace"])]
        splitter: String,
    },
    /// Fine-tune a BIEO tagger.
    WorTrain(WorTrainArgs),
    /// Score a tagger on labeled records.
    WorEval {
        /// Tagger manifest written by wor-train.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        max_len: Option<usize>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one instance with its target arrows.
    Inspect {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Compare metrics files and write plot-ready series.
    Report {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Directory for the CSV series.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic toy corpus and its vocabulary.
    Toy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        documents: usize,
        #[arg(long, default_value_t = 1)]
        sentences_per_document: usize,
        #[arg(long, default_value_t = 10)]
        min_words: usize,
        #[arg(long, default_value_t = 24)]
        max_words: usize,
    },
}

#[derive(Args, Debug)]
pub struct WorTrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Pre-trained checkpoint manifest; random initialization without it.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Architecture for random initialization.
    #[arg(long, default_value = "tiny", value_parser = ["tiny", "small"])]
    pub preset: String,
    /// Labeled records scored after training.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with fine-tuning settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Overrides of fine-tuning settings such as peak_lr=5e-4.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}
