mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Compose, train and compare transformers described by sublayer orderings.
#[derive(Debug, Parser)]
#[command(name = "sublab", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a sandwich ordering.
    Gen(GenArgs),
    /// Count ex-bias sublayer parameters of an ordering.
    Params(ParamsArgs),
    /// Draw random orderings.
    Sample(SampleArgs),
    /// Show the half split of an ordering.
    Split(SplitArgs),
    /// Train one model from a TrainConfig JSON file.
    Train(TrainArgs),
    /// Run a random search from a SearchConfig JSON file.
    Search(SearchArgs),
    /// Run a sandwich-coefficient sweep from a SearchConfig JSON file.
    Sweep(SearchArgs),
    /// Record the self-attention weights of a checkpoint.
    Capture(CaptureArgs),
    /// Attention distance between dumps.
    Distance(DistanceArgs),
    /// Compare bottom/top sublayer counts of better and worse orderings.
    AnalyzeHalves(HalvesArgs),
    /// Render trial records as CSV, Markdown or SVG.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct GenArgs {
    /// s^k (sf)^(n-k) f^k
    #[arg(long, num_args = 2, value_names = ["N", "K"])]
    sandwich: Option<Vec<usize>>,
    /// (sc)^k (scf)^(n-k) f^k
    #[arg(long, num_args = 2, value_names = ["N", "K"])]
    decoder_sandwich: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long)]
    ordering: String,
    #[arg(long)]
    d: u64,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Shuffle N_S self-attention and N_F feedforward sublayers.
    #[arg(long, num_args = 2, value_names = ["N_S", "N_F"], required_unless_present = "budget", conflicts_with = "budget")]
    permutation: Option<Vec<usize>>,
    /// Add s or f with equal probability until BUDGET units are spent.
    #[arg(long, value_name = "BUDGET")]
    budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of orderings; draw i uses a seed derived from --seed and i.
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    ordering: String,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// UTF-8 text file; the bundled text when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Train/valid/test fractions.
    #[arg(long, num_args = 3, value_names = ["TRAIN", "VALID", "TEST"])]
    split: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the trial record here (JSON Lines) instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Save trained weights.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Overrides the config's output path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials trained in parallel.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct CaptureArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// First validation character of the captured window.
    #[arg(long, default_value_t = 0)]
    offset: usize,
    /// Window length; the model's context when omitted.
    #[arg(long)]
    length: Option<usize>,
    /// Identifier stored in the dump header; the checkpoint file stem by default.
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    /// Attention dumps to compare pairwise.
    #[arg(required = true, num_args = 1..)]
    dumps: Vec<PathBuf>,
    /// Group label per dump, for same- versus cross-group means.
    #[arg(long, num_args = 1..)]
    groups: Option<Vec<String>>,
    /// Divide position differences by the sequence length.
    #[arg(long)]
    normalized: bool,
    /// Also write the table and means as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HalvesArgs {
    /// Search results; the bundled published tables when omitted.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Better means strictly below this metric.
    #[arg(long)]
    threshold: Option<f64>,
    /// Record field used as the metric.
    #[arg(long, value_enum, default_value_t = commands::Metric::Ppl)]
    metric: commands::Metric,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    /// csv, markdown or svg.
    #[arg(long)]
    format: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
