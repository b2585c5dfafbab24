use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "coverdx", version, about = "Set-covering diagnosis over a fault/symptom knowledge base")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a knowledge base file and list every violation.
    Kbcheck(KbcheckArgs),
    /// Rank explanations for a fixed set of findings.
    Diagnose(DiagnoseArgs),
    /// Run an interactive question-and-answer session on the terminal.
    Consult(ConsultArgs),
    /// Compile the knowledge base into symptom => fault rules.
    Rulegen(RulegenArgs),
    /// Hierarchically cluster faults or symptoms.
    Cluster(ClusterArgs),
    /// Re-estimate priors and causal strengths from a case file.
    Estimate(EstimateArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Single,
    Multiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Bayes,
    Heuristic,
}

#[derive(Debug, Args)]
pub struct KbcheckArgs {
    pub path: PathBuf,
    /// Ignore unknown keys instead of rejecting them.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Posterior the top explanation needs before the session concludes.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long = "max-cover")]
    pub max_cover: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Divide information gain by question cost.
    #[arg(long)]
    pub costs: bool,
    #[arg(long, value_enum, default_value_t = Strategy::Bayes)]
    pub strategy: Strategy,
    /// Background probability of a symptom with no active cause.
    #[arg(long)]
    pub leak: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// Comma-separated ids of symptoms observed present.
    #[arg(long, value_delimiter = ',')]
    pub present: Vec<String>,
    /// Comma-separated ids of symptoms observed absent.
    #[arg(long, value_delimiter = ',')]
    pub absent: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ConsultArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RulegenArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Largest antecedent considered.
    #[arg(long = "max-antecedent", default_value_t = coverdx::rulegen::DEFAULT_MAX_ANTECEDENT)]
    pub max_antecedent: usize,
    #[arg(long)]
    pub leak: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Items {
    Faults,
    Symptoms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClusterFormat {
    Newick,
    Json,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, value_enum, default_value_t = Items::Faults)]
    pub items: Items,
    /// Also report the flat clusters obtained by cutting at this height.
    #[arg(long)]
    pub cut: Option<f64>,
    #[arg(long, value_enum, default_value_t = ClusterFormat::Newick)]
    pub format: ClusterFormat,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// CSV with columns case_id, faults, then one column per symptom.
    #[arg(long)]
    pub cases: PathBuf,
    /// Where to write the re-weighted KB; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the JSON estimation report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of `<name>.json` KB files. COVERDX_KB_DIR overrides it.
    #[arg(long = "kb-dir", default_value = "kb")]
    pub kb_dir: PathBuf,
    #[arg(long, default_value = "sessions")]
    pub store: PathBuf,
    #[arg(long = "max-sessions", default_value_t = 1024)]
    pub max_sessions: usize,
}
