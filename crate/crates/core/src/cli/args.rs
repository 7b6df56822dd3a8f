use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::hmm::Family;

#[derive(Debug, Clone, Parser)]
#[command(name = "dhmm", version, about = "Diversified hidden Markov models: synthesize, train, decode, evaluate, sweep")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Sample the synthetic five-state benchmark.
    Synth(SynthArgs),
    /// Fit a model to a corpus.
    Train(TrainArgs),
    /// Viterbi-decode a corpus with a saved model.
    Label(LabelArgs),
    /// Score predicted labels against gold labels.
    Eval(EvalArgs),
    /// Run a grid of trainings and collect metrics.
    Sweep(SweepArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Label(_) => "label",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }

    pub fn common(&self) -> Option<&Common> {
        match self {
            Command::Synth(a) => Some(&a.common),
            Command::Train(a) => Some(&a.common),
            Command::Label(a) => Some(&a.common),
            Command::Eval(a) => Some(&a.common),
            Command::Sweep(a) => Some(&a.common),
            Command::Replay(_) => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config with optional "train" and "toy" sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for all randomness of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Existing directory that receives the outputs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusFormat {
    /// .json: corpus JSON; .data/.tsv: letter records; anything else: tagged text.
    Auto,
    Json,
    Pos,
    Ocr,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Auto)]
    pub format: CorpusFormat,
    /// RAW_TAG<TAB>index file for tagged text (defaults to the bundled 46→15 map).
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    /// Word list from training; tagged text is indexed against it, unseen words
    /// map to the unknown-word slot.
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Unsup,
    Sup,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Number of hidden states (defaults to the corpus label count).
    #[arg(long)]
    pub k: Option<usize>,
    /// Expected emission family; must match the corpus.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    /// Weight of the diversity prior.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight tying A to its counted estimate (supervised mode).
    #[arg(long = "alpha-a")]
    pub alpha_a: Option<f64>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Mode::Unsup)]
    pub mode: Mode,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Align {
    /// Optimal one-to-one matching of predicted to gold states.
    Hungarian,
    /// Compare labels as they are.
    None,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted labels, one sequence per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold labels: a labels file (.txt) or a labeled corpus.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Auto)]
    pub gold_format: CorpusFormat,
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    /// Number of states (defaults to the model's).
    #[arg(long)]
    pub k: Option<usize>,
    /// States occupied at most this often are not counted as identified.
    #[arg(long = "sigma-f", default_value_t = 50)]
    pub sigma_f: u64,
    /// Model whose transition diversity is reported.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Align::Hungarian)]
    pub align: Align,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    /// Prior weight over --values on a supplied corpus.
    Alpha,
    /// Emission standard deviation on the synthetic benchmark.
    Variance,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub sweep: SweepVar,
    /// Comma-separated grid; defaults to 0,1,10,100,1000 for alpha and the
    /// 50-point σ grid for variance.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Independent initializations per grid point; seeds are seed+i.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value_t = Mode::Unsup)]
    pub mode: Mode,
    /// Cross-validation folds for supervised alpha sweeps.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long = "sigma-f", default_value_t = 50)]
    pub sigma_f: u64,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Auto)]
    pub format: CorpusFormat,
    #[arg(long)]
    pub tag_map: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the reproduced outputs.
    #[arg(long)]
    pub out: PathBuf,
}
