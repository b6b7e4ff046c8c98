use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::CliError;

/// Grow, fold, evaluate and compare agent-generated social graphs.
#[derive(Parser, Debug)]
#[command(name = "agentgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation and write its artifacts.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write folded networks of a stored run.
    Fold {
        #[command(flatten)]
        input: GraphArgs,
    },
    /// Structural metrics of a stored run's folds.
    Evaluate {
        #[command(flatten)]
        input: GraphArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// A stored run's folds against matched rule-based baselines.
    Compare {
        #[command(flatten)]
        input: GraphArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Sweep one retrieval setting with a shared seed.
    Ablate {
        #[arg(long, value_enum)]
        recipe: Recipe,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Per-interaction time at several worker counts.
    Speedup {
        #[command(flatten)]
        run: RunArgs,
        /// Worker counts to measure.
        #[arg(long = "port-list", value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 24])]
        port_list: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    #[value(name = "n_r")]
    NR,
    #[value(name = "hub_rate")]
    HubRate,
    Filters,
    Rerank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

/// A config file plus flag overrides (flag > file > default).
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub ports: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `mock`, `remote` (settings from the config file) or `replay:<path>`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub n_r: Option<usize>,
    #[arg(long)]
    pub n_f: Option<usize>,
    #[arg(long)]
    pub hub_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub rerank: Option<Switch>,
    #[arg(long)]
    pub injected_latency_ms: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub folds: Option<Vec<String>>,
}

#[derive(Args, Debug, Clone)]
pub struct GraphArgs {
    /// Directory holding nodes.jsonl and edges.tsv.
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Defaults to every fold of the run's scenario.
    #[arg(long, value_delimiter = ',')]
    pub folds: Option<Vec<String>>,
    /// Needed only when the run directory has no manifest.json.
    #[arg(long)]
    pub scenario: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Seed for sampled estimators and baseline graphs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference edge lists for the MMD family.
    #[arg(long = "reference", value_delimiter = ',')]
    pub reference: Vec<PathBuf>,
    /// Degree used for power-law fits of directed folds.
    #[arg(long, default_value = "total")]
    pub degree_mode: String,
    /// Baseline graphs per kind.
    #[arg(long, default_value_t = 5)]
    pub samples: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { run } => commands::simulate(&run),
        Command::Fold { input } => commands::fold(&input),
        Command::Evaluate { input, eval } => commands::evaluate(&input, &eval),
        Command::Compare { input, eval } => commands::compare(&input, &eval),
        Command::Ablate { recipe, run } => commands::ablate(recipe, &run),
        Command::Speedup { run, port_list } => commands::speedup(&run, &port_list),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Backend(_) => 3,
                CliError::Config(_) => 2,
                CliError::Io(_) => 1,
            })
        }
    }
}
