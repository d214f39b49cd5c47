use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "bwsq", version, about = "Best-Worst Scaling for free-text quantity descriptions")]
pub struct Cli {
    /// Log line format on standard error. Filter with BWSQ_LOG (e.g. `debug`).
    #[arg(long, value_enum, default_value_t = LogFormat::Text, global = true)]
    pub log_format: LogFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus file and write it normalized, optionally deduplicated and split.
    Ingest(IngestArgs),
    /// Generate a balanced Best-Worst design.
    Design(DesignArgs),
    /// Collect best/worst judgments from an LLM endpoint or the built-in intensity oracle.
    AnnotateLlm(AnnotateArgs),
    /// Run the human annotation service.
    Serve(ServeArgs),
    /// Counting scores from judgments.
    Score(ScoreArgs),
    /// Pairwise Cohen's kappa between annotators.
    Agreement(AgreementArgs),
    /// Presence/absence logistic regression.
    TrainBinary(TrainArgs),
    /// Seven-class one-vs-rest logistic regression.
    TrainMulti(TrainArgs),
    /// Kernel ridge regression on scores.
    TrainRegress(RegressArgs),
    /// Zero-shot frequency classes from an LLM endpoint.
    ZeroShot(ZeroShotArgs),
    /// Evaluate a saved model or zero-shot labels against a corpus.
    Evaluate(EvaluateArgs),
    /// Bin scores into classes and summarize score distributions.
    Report(ReportArgs),
    /// F1-macro on a fixed test split as the training set grows.
    Curve(CurveArgs),
    /// Write a seeded synthetic corpus with planted intensities.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// Output file; `.csv` or `.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip invalid rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub dedup: bool,
    /// Assign a seeded train/test split with this test share.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DesignArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Tuple size.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Repetition factor: every record appears in `k * N` tuples.
    #[arg(long = "N", default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop `n mod k` random records when the corpus size is not divisible by k.
    #[arg(long)]
    pub truncate: bool,
    /// Leave records labelled absent or extinct out of the design.
    #[arg(long)]
    pub present_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EndpointArgs {
    /// Chat-completions base URL; defaults to BWSQ_BASE_URL.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Model name; defaults to BWSQ_MODEL.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Re-asks after an unparseable answer.
    #[arg(long, default_value_t = 2)]
    pub parse_retries: u32,
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Judgment journal; existing valid judgments are kept and skipped.
    #[arg(long)]
    pub out: PathBuf,
    /// `mock:intensity` for the offline oracle, otherwise the annotator name to record.
    #[arg(long)]
    pub annotator: Option<String>,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub campaign: PathBuf,
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory with the built annotation UI.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// One or more judgment files.
    #[arg(long, num_args = 1.., required = true)]
    pub judgments: Vec<PathBuf>,
    /// Only use judgments from this annotator (`llm:name` or `human:XY`).
    #[arg(long)]
    pub annotator: Option<String>,
    /// Sum counts over all annotators instead of requiring a single one.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AgreementArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub judgments: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Compare two annotators by their B+W kappas against every other annotator,
    /// paired by that annotator, with a permutation test, e.g. `--compare llm:a,llm:b`.
    #[arg(long, value_delimiter = ',')]
    pub compare: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model artifact (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed regularization strength; tuned on an inner split when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub min_doc_freq: usize,
    #[arg(long)]
    pub class_weights: bool,
    /// Tokens removed from the vocabulary before training.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Quantifier lexicon CSV (`phrase,score`) adding lexicon features.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Write the top N signed features per class to `<out>.features.json`.
    #[arg(long)]
    pub audit: Option<usize>,
    /// Report k-fold cross-validation metrics over all labeled records as well.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Debug, Args, Serialize)]
pub struct RegressArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Score CSV as written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Precomputed embeddings CSV (`record_id,v1,...`); unigram features when omitted.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Grid-search kernel, gamma and alpha on an inner validation split.
    #[arg(long)]
    pub tune: bool,
    #[arg(long)]
    pub no_center: bool,
    #[arg(long, default_value_t = 1)]
    pub min_doc_freq: usize,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ZeroShotArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Label journal; existing valid labels are kept and skipped.
    #[arg(long)]
    pub out: PathBuf,
    /// `mock:label` copies the gold class (offline testing), otherwise the name to record.
    #[arg(long)]
    pub annotator: Option<String>,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Saved classifier or regressor.
    #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
    pub model: Option<PathBuf>,
    /// Zero-shot label journal.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Targets for a regressor.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Evaluate on every labeled record instead of the test split.
    #[arg(long)]
    pub all: bool,
    /// Metrics JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningArg {
    EqualWidth,
    Quantile,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    /// Output directory for `bins.csv`, `class_table.csv` and histograms.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = BinningArg::EqualWidth)]
    pub binning: BinningArg,
    /// Four interior class edges for equal-width binning.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub edges: Vec<f64>,
    /// Species to summarize; all species when omitted.
    #[arg(long)]
    pub species: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Binary,
    Multi,
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Multi)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 100)]
    pub step: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// CSV with `n_train,f1_macro`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub species: usize,
    #[arg(long, default_value_t = 0.15)]
    pub absent_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
