use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eyeball_core::backend::BackendKind;
use eyeball_core::strategies::StrategyKind;

#[derive(Debug, Parser)]
#[command(name = "eyeball", version, about = "Benchmark multimodal models on eyeballed TSP tours")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset of random instances and their exact optima.
    Generate(GenerateArgs),
    /// Run one prompting strategy over a dataset.
    Run(Box<RunArgs>),
    /// Write CSV tables, charts and contact sheets for a finished run.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Instance sizes, comma separated [default: 5,10,15,20]
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Instances per size [default: 30]
    #[arg(long)]
    pub count: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset file; optima go beside it as <stem>.optima.json
    /// [default: dataset.json]
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Config file [default: ./eyeball.toml when present]
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset file written by `generate` [default: dataset.json]
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// zero-shot, few-shot-v1, few-shot-v2, ensemble, refine-1 or refine-2
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Only run these sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Only run the first N instances of each size
    #[arg(long)]
    pub limit: Option<usize>,

    /// http, mock-oracle or mock-scripted [default: mock-oracle]
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Chat-completions endpoint URL
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Vision model name
    #[arg(long)]
    pub model: Option<String>,
    /// Text-only model for the initial refine-1 guess [default: --model]
    #[arg(long)]
    pub text_model: Option<String>,
    /// Environment variable holding the API key [default: EYEBALL_API_KEY]
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Sampling temperature for every request [default: 0.2, ensemble 1.0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Maximum reply tokens [default: 1024]
    #[arg(long)]
    pub max_output_tokens: Option<u32>,
    /// Per-request timeout in seconds [default: 120]
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Retries for timeouts, 408, 429 and 5xx replies [default: 3]
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Requests in flight at once, across all workers [default: 4]
    #[arg(long)]
    pub max_concurrent: Option<usize>,

    /// Mock oracle: probability of the optimal tour
    #[arg(long)]
    pub mock_p_optimal: Option<f64>,
    /// Mock oracle: probability of a 2-opt perturbed optimum
    #[arg(long)]
    pub mock_p_perturbed: Option<f64>,
    /// Mock oracle: probability of an out-of-range node ID
    #[arg(long)]
    pub mock_p_incorrect_id: Option<f64>,
    /// Mock oracle: probability of a route with missing nodes
    #[arg(long)]
    pub mock_p_incomplete: Option<f64>,
    /// Mock oracle: probability of a reply without a sequence
    #[arg(long)]
    pub mock_p_unparseable: Option<f64>,
    /// Mock oracle: 2-opt moves applied to perturbed tours [default: 2]
    #[arg(long)]
    pub mock_perturb_moves: Option<u32>,
    /// Mock oracle: seed [default: 0]
    #[arg(long)]
    pub mock_seed: Option<u64>,
    /// Transcript to replay with the mock-scripted backend
    #[arg(long)]
    pub transcript: Option<PathBuf>,

    /// Ensemble: number of draws per instance [default: 13]
    #[arg(long)]
    pub k: Option<usize>,
    /// Ensemble: sizes S to report, comma separated [default: 3,5,7,9,11,13]
    #[arg(long, value_delimiter = ',')]
    pub ensemble_sizes: Option<Vec<usize>>,
    /// Refine: feedback iterations [default: 10]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Few-shot: demonstrations per prompt [default: 3]
    #[arg(long)]
    pub demos: Option<usize>,

    /// Instances evaluated in parallel [default: 4]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write every prompt as readable text under <run>/prompts/
    #[arg(long)]
    pub dump_prompts: bool,
    /// Directory holding run directories [default: ./runs]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Config file [default: ./eyeball.toml when present]
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory (runs/<run_id>)
    pub run_dir: PathBuf,
}
