use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use closedloop::report::ReportFormat;
use closedloop::Method;

#[derive(Debug, Parser)]
#[command(name = "closedloop", version, about = "Closed-loop self-correction runs, benchmarks and reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method over a task set and write trajectories.
    Run(RunArgs),
    /// Run several methods over a task set and report metrics.
    Bench(BenchArgs),
    /// Recompute metrics from trajectory logs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config value by dotted path, e.g. sim.overshoot_probability=0.2
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Plant to drive: sim or llm.
    #[arg(long)]
    pub plant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSONL task file.
    #[arg(long, conflicts_with_all = ["synthetic", "question"])]
    pub tasks: Option<PathBuf>,
    /// Generate this many synthetic tasks from the simulated plant config.
    #[arg(long, value_name = "N", conflicts_with = "question")]
    pub synthetic: Option<usize>,
    /// Inline question; needs --gold.
    #[arg(long, requires = "gold")]
    pub question: Option<String>,
    #[arg(long, requires = "question")]
    pub gold: Option<String>,
    /// Instruction template file with [arithmetic], [logic_gap], [premise] sections.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Concurrent tasks; 0 uses every core.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Record wall-clock start and finish times in trajectories.
    #[arg(long)]
    pub timestamps: bool,

    /// Self-consistency samples.
    #[arg(long)]
    pub k: Option<usize>,
    /// Low-confidence threshold, 0..=100.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Severity at or below which an output counts as clean.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Convergence tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Overshoot tolerance.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Correction budget.
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Modality weights as sc,vc,lc.
    #[arg(long, value_delimiter = ',', num_args = 3, value_name = "W")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value = "cybercorrect")]
    pub method: Method,
    /// Trajectory JSONL; without it trajectories go to stdout and summaries to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated methods; defaults to all six.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Repeat the bench for each value, e.g. sigma=0.2,0.3,0.4
    #[arg(long, value_name = "KEY=V1,V2,..")]
    pub sweep: Option<String>,
    /// Trajectory JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics report file; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
    /// Accuracy after each iteration, as CSV.
    #[arg(long)]
    pub iterations_csv: Option<PathBuf>,
    /// Also report overshoot over accepted severities.
    #[arg(long)]
    pub accepted_overshoot: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trajectory JSONL files.
    pub files: Vec<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations_csv: Option<PathBuf>,
    #[arg(long)]
    pub accepted_overshoot: bool,
}
