mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tidybench::exploration::ExplorationKind;
use tidybench::harness::RankerKind;
use tidybench::planner::Ordering;

#[derive(Parser)]
#[command(name = "tidybench", version, about = "Grid-world household rearrangement benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic scenes, a catalog, annotations, a preference table and word vectors.
    Synth(SynthArgs),
    /// Generate episode splits.
    Gen(GenArgs),
    /// Run the agent over an episode file.
    Run(RunArgs),
    /// Train the contrastive-matching ranker.
    TrainRanker(TrainArgs),
    /// Mean average precision of a ranker per object split.
    EvalRanker(EvalArgs),
    /// Fleiss' kappa over an annotation file.
    Agreement(AgreementArgs),
    /// Aggregate one or more results files into a table.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub scenes: usize,
    #[arg(long, default_value_t = 64)]
    pub objects: usize,
    #[arg(long, default_value_t = 6)]
    pub rooms: usize,
    #[arg(long, default_value_t = 30)]
    pub size: usize,
    /// Probability that a synthetic annotator reports the latent bin.
    #[arg(long, default_value_t = 0.9)]
    pub agreement: f64,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct GenArgs {
    /// Scene files or directories of scene files.
    #[arg(long, required = true, num_args = 1..)]
    pub scene: Vec<PathBuf>,
    /// Preference table JSON, or an annotation CSV to aggregate.
    #[arg(long)]
    pub prefs: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    /// Episode counts per split, e.g. `train=100,val-seen=20`.
    #[arg(long)]
    pub counts: Option<String>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub scene: Vec<PathBuf>,
    #[arg(long)]
    pub episodes: PathBuf,
    #[arg(long)]
    pub prefs: PathBuf,
    #[arg(long, default_value = "oracle")]
    pub ranker: RankerKind,
    #[arg(long, default_value = "frontier")]
    pub explore: ExplorationKind,
    #[arg(long, default_value = "discovery-time")]
    pub order: Ordering,
    #[arg(long, default_value_t = 16)]
    pub ne: usize,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Word vectors, needed by `--ranker embedding`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Trained checkpoint, needed by `--ranker embedding`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Score table, needed by `--ranker external`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Correct/incorrect score threshold for learned and external rankers.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Per-object success probability of `--ranker noisy`.
    #[arg(long, default_value_t = 0.5)]
    pub noise_p: f64,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub prefs: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 512)]
    pub output: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub wd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub prefs: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long, default_value = "embedding")]
    pub ranker: RankerKind,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AgreementArgs {
    /// Annotation CSV.
    #[arg(long)]
    pub prefs: PathBuf,
    /// Optional per-object CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Results files; each becomes one row labelled by its directory name.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// Preference table, needed for `--es-at-k`.
    #[arg(long)]
    pub prefs: Option<PathBuf>,
    /// Also print ES@K for K = 1..=N.
    #[arg(long)]
    pub es_at_k: Option<usize>,
    /// Optional CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging() {
    let level = std::env::var("HOUSEKEEP_LOG").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Gen(a) => commands::gen(a),
        Command::Run(a) => commands::run(a),
        Command::TrainRanker(a) => commands::train(a),
        Command::EvalRanker(a) => commands::eval(a),
        Command::Agreement(a) => commands::agreement(a),
        Command::Report(a) => commands::report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
