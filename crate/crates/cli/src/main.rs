mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use advscore::detect::CountMode;
use advscore::report::Transform;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Effectiveness scoring and statistics for physical adversarial objects.
#[derive(Debug, Parser)]
#[command(name = "advscore", version)]
pub struct Cli {
    /// Reject unknown fields and columns in data files (default).
    #[arg(long, global = true, overrides_with = "lenient")]
    pub strict: bool,
    /// Ignore unknown fields and columns in data files.
    #[arg(long, global = true, overrides_with = "strict")]
    pub lenient: bool,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    /// `None` leaves the config's choice in place.
    pub fn strictness(&self) -> Option<bool> {
        match (self.strict, self.lenient) {
            (_, true) => Some(false),
            (true, _) => Some(true),
            _ => None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the conditions of a design.
    Grid(GridArgs),
    /// Check a dataset against its grid.
    Validate(ValidateArgs),
    /// Effectiveness scores with optional intervals and tests.
    Score(ScoreArgs),
    /// Source/target comparison pair for a targeted attack.
    Targeted(TargetedArgs),
    /// Logistic regression of classification success on scene factors.
    Logit(LogitArgs),
    /// Generate synthetic logs from a scenario file.
    Simulate(SimulateArgs),
    /// Render count tables, scores and class histograms.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Print only the number of conditions.
    #[arg(long)]
    pub count: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Run configuration (TOML). Required for JSONL inputs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-cell counts CSV.
    #[arg(long, conflicts_with = "frames")]
    pub counts: Option<PathBuf>,
    /// Detection JSONL, one frame per line.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Apply the objectness gate and NMS to frame logs before counting.
    #[arg(long)]
    pub postprocess: bool,
    #[arg(long, value_parser = parse_count_mode)]
    pub count_mode: Option<CountMode>,
}

fn parse_count_mode(s: &str) -> Result<CountMode, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Confidence level of bootstrap intervals.
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub stats: StatsArgs,
    /// Print per-level marginal scores for a factor (repeatable).
    #[arg(long)]
    pub marginal: Vec<String>,
    /// Attach percentile bootstrap intervals to every score.
    #[arg(long)]
    pub bootstrap: bool,
    /// One-way ANOVA of singleton scores across the levels of a factor
    /// (repeatable).
    #[arg(long)]
    pub anova: Vec<String>,
    /// One-sample t-test of singleton scores against 0.
    #[arg(long)]
    pub ttest: bool,
    /// Print the machine report to stdout instead of text.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TargetedArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Classification JSONL.
    #[arg(long)]
    pub classifications: PathBuf,
    /// Correct class of the object.
    #[arg(long)]
    pub source: String,
    /// Class the adversarial object aims for.
    #[arg(long)]
    pub target: String,
    /// Restrict to one model id.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LogitArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub classifications: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub model: Option<String>,
    /// L2 penalty on non-intercept coefficients.
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TransformArg {
    Log10,
    Identity,
}

impl From<TransformArg> for Transform {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Log10 => Transform::Log10Plus1,
            TransformArg::Identity => Transform::Identity,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Classification JSONL for a class histogram.
    #[arg(long, conflicts_with_all = ["counts", "frames"])]
    pub classifications: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "log10")]
    pub transform: TransformArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
