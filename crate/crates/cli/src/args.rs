use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "windtunnel", version, about = "Community-preserving sampling of IR corpora")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub engine: EngineArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EngineArgs {
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// In-memory shuffle budget in bytes before spilling to disk.
    #[arg(long, global = true)]
    pub memory_budget: Option<usize>,

    /// Directory for spill files.
    #[arg(long, global = true)]
    pub tmp_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the entity-affinity graph from qrels.
    BuildGraph(BuildGraphArgs),
    /// Detect communities and choose which to sample.
    Sample(SampleArgs),
    /// Join a sample plan back into queries, corpus and qrels.
    Reconstruct(ReconstructArgs),
    /// Uniform random entity sample with the same closure rules.
    Baseline(BaselineArgs),
    /// Fit a Yule-Simon distribution to the graph's degree histogram.
    FitPowerlaw(FitArgs),
    /// Precision@k of a run file against qrels.
    Eval(EvalArgs),
    /// Query density of a written sample.
    Density(DensityArgs),
    /// build-graph, sample and reconstruct in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QrelsInput {
    #[arg(long)]
    pub qrels: PathBuf,

    /// trec-qrels or scored-tsv.
    #[arg(long, default_value = "trec-qrels")]
    pub qrels_format: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TableInputs {
    #[arg(long)]
    pub queries: PathBuf,

    #[arg(long)]
    pub corpus: PathBuf,

    #[command(flatten)]
    pub qrels: QrelsInput,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(multiple = false)]
pub struct ScoreFilterArgs {
    /// Keep qrels with score strictly above this threshold.
    #[arg(long)]
    pub tau: Option<f64>,

    /// Keep the highest-scored fraction of qrels (boundary ties kept).
    #[arg(long)]
    pub top_fraction: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(multiple = false)]
pub struct ScaleArgs {
    /// Multiplier on the size-proportional inclusion probability.
    #[arg(long)]
    pub scale: Option<f64>,

    /// Calibrate the scale so the expected sample has this many entities.
    #[arg(long)]
    pub target_entities: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub qrels: QrelsInput,

    #[command(flatten)]
    pub filter: ScoreFilterArgs,

    #[arg(long, default_value_t = windtunnel::graph_builder::DEFAULT_MAX_QUERY_FANOUT)]
    pub max_query_fanout: usize,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub edges: PathBuf,

    #[arg(long, default_value_t = windtunnel::graph_sampler::DEFAULT_ROUNDS)]
    pub rounds: u32,

    #[arg(long)]
    pub seed: u64,

    #[command(flatten)]
    pub scale: ScaleArgs,

    /// Entity count of the original corpus.
    #[arg(long)]
    pub total_entities: u64,

    /// Output paths as `clusters.tsv,plan.tsv`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub out: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub plan: PathBuf,

    #[arg(long)]
    pub clusters: PathBuf,

    #[command(flatten)]
    pub tables: TableInputs,

    #[arg(long)]
    pub out: PathBuf,

    /// Write three empty files instead of failing when nothing is selected.
    #[arg(long)]
    pub allow_empty: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    /// Number of entities to draw.
    #[arg(long)]
    pub k: usize,

    #[arg(long)]
    pub seed: u64,

    #[command(flatten)]
    pub tables: TableInputs,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub allow_empty: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub edges: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub hist: PathBuf,

    #[arg(long, default_value_t = windtunnel::powerlaw::DEFAULT_TOL)]
    pub tol: f64,

    #[arg(long, default_value_t = windtunnel::powerlaw::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,

    #[command(flatten)]
    pub qrels: QrelsInput,

    #[arg(long, default_value_t = windtunnel::eval_metrics::DEFAULT_K)]
    pub k: usize,

    /// Minimum qrel score that counts as relevant.
    #[arg(long, default_value_t = windtunnel::eval_metrics::DEFAULT_RELEVANCE_THRESHOLD)]
    pub rel_threshold: f64,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensityArgs {
    /// Directory holding queries.tsv, corpus.tsv and qrels.tsv.
    #[arg(long)]
    pub sample: PathBuf,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub tables: TableInputs,

    /// Defaults to `--top-fraction 0.5` when neither is given.
    #[command(flatten)]
    pub filter: ScoreFilterArgs,

    #[arg(long, default_value_t = windtunnel::graph_builder::DEFAULT_MAX_QUERY_FANOUT)]
    pub max_query_fanout: usize,

    #[arg(long, default_value_t = windtunnel::graph_sampler::DEFAULT_ROUNDS)]
    pub rounds: u32,

    #[command(flatten)]
    pub scale: ScaleArgs,

    #[arg(long)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub allow_empty: bool,
}
