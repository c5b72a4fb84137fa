//! `snapdial`: corpus generation, tracker and generator training, decoding,
//! evaluation, analysis exports, the HTTP service and a terminal chat.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (the message names the
//! stage), 2 on missing or invalid inputs.

mod commands;
mod config;
mod data;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{BeamArgs, ConfigArgs};

#[derive(Debug, Parser)]
#[command(name = "snapdial", version, about = "Task-oriented neural dialogue with snapshot learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus, its venue database and a 3:1:1 split
    GenCorpus(GenCorpusArgs),
    /// Train the belief trackers and build the vocabulary for a corpus
    TrainTrackers(TrainTrackersArgs),
    /// Train generator models into runs/<config-hash>/<seed>/
    Train(TrainArgs),
    /// Decode a split with a checkpoint into a JSON-lines dump
    Decode(DecodeArgs),
    /// Train, decode and score configurations, or re-score existing runs
    Eval(EvalArgs),
    /// Export gate statistics, attention heat maps and snapshot traces
    Analyze(AnalyzeArgs),
    /// Serve a checkpoint over HTTP
    Serve(ServeArgs),
    /// Converse with a checkpoint in the terminal
    Chat(ChatArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Number of dialogues
    #[arg(long, default_value_t = 500)]
    pub dialogues: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output corpus directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainTrackersArgs {
    /// Corpus directory written by gen-corpus
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.02)]
    pub tracker_lr: f64,
    #[arg(long, default_value_t = 30)]
    pub tracker_epochs: usize,
    /// Minimum training-split count for a vocabulary entry
    #[arg(long, default_value_t = snapdial::corpus::DEFAULT_MIN_COUNT)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Root of the run directories
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// First seed (overrides the config file)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds to train
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// train, valid or test
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Dump path; defaults to decode.jsonl next to the checkpoint
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Entity-pointer seed; defaults to the checkpoint's training seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub beam: BeamArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Results directory
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Run all eight rows of the results table instead of the configured one
    #[arg(long)]
    pub grid: bool,
    /// Re-score existing run directories instead of training
    #[arg(long, value_name = "DIR", conflicts_with = "grid")]
    pub runs: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[command(flatten)]
    pub beam: BeamArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Checkpoints to analyse (repeatable)
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "analysis")]
    pub out: PathBuf,
    /// Test turns exported as heat maps and traces per checkpoint
    #[arg(long, default_value_t = 10)]
    pub turns: usize,
    #[command(flatten)]
    pub beam: BeamArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Without a checkpoint every route answers 503
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[command(flatten)]
    pub beam: BeamArgs,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also print the skeletal response
    #[arg(long)]
    pub skeletal: bool,
    #[command(flatten)]
    pub beam: BeamArgs,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(&a),
        Command::TrainTrackers(a) => commands::train_trackers(&a),
        Command::Train(a) => commands::train(&a),
        Command::Decode(a) => commands::decode(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Serve(a) => commands::serve(&a),
        Command::Chat(a) => commands::chat(&a),
    };
    if let Err(e) = result {
        match &e {
            error::CliError::Usage(_) => eprintln!("usage error: {e}"),
            error::CliError::Runtime { .. } => eprintln!("error in {e}"),
        }
        std::process::exit(e.exit_code());
    }
}
