use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pfmcmc::parallel::WORKERS_ENV;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "pfmcmc",
    version,
    about = "Particle filters, particle-marginal adaptive MCMC and evidence estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a model
    Simulate(SimulateArgs),
    /// Repeated filter runs at fixed parameters: log-likelihood and its SD
    Filter(FilterArgs),
    /// Run an ARWM or AIMH chain
    Sample(SampleArgs),
    /// Bridge and importance sampling evidence from a finished run
    Evidence(EvidenceArgs),
    /// Acceptance rate, inefficiency and ECT of a chain
    Diag(DiagArgs),
    /// A named replication study
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Ar1,
    Binomial,
    Sv,
    Garch,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Binomial trials per observation
    #[arg(long, default_value_t = 100)]
    pub trials: u32,
    /// SV: correlated observation and volatility shocks
    #[arg(long)]
    pub leverage: bool,
    /// SV: occasional observations with 2.5 times the usual scale
    #[arg(long)]
    pub outliers: bool,
    #[arg(long, default_value_t = 0.03)]
    pub outlier_prob: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FilterOpts {
    /// sir, fapf, papf or papf-eps
    #[arg(long, default_value = "sir")]
    pub variant: String,
    /// Particles
    #[arg(long = "M", alias = "particles", default_value_t = 100)]
    pub particles: usize,
    /// Mixture weight of the transition in papf-eps
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// stratified or multinomial
    #[arg(long, default_value = "stratified")]
    pub resampler: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated natural parameters; defaults to the model's study values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long = "T", alias = "len", default_value_t = 200)]
    pub t_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; standard output when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[command(flatten)]
    pub filter: FilterOpts,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// JSON report; standard output when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub filter: FilterOpts,
    /// Use the exact Kalman likelihood (ar1 only)
    #[arg(long)]
    pub exact: bool,
    /// Prior as JSON; the model default when omitted
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Hold a parameter fixed, as name=value; repeatable
    #[arg(long = "fix", value_parser = parse_fix)]
    pub fixed: Vec<(String, f64)>,
    /// Starting natural parameters
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub init: Option<Vec<f64>>,
    /// arwm or aimh
    #[arg(long, default_value = "aimh")]
    pub sampler: String,
    #[arg(long = "iters", alias = "iterations", default_value_t = 5000)]
    pub iterations: usize,
    /// ARWM warm-up iterations that initialize AIMH
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    /// AIMH refit iterations
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    /// ARWM iterations using only the small fixed kernel
    #[arg(long)]
    pub j0: Option<usize>,
    /// sp, mp1 or mp2
    #[arg(long, default_value = "sp")]
    pub mode: String,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Proposals per worker in an mp1 round
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvidenceArgs {
    /// Directory written by `sample`
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Proposal draws; defaults to the retained posterior draws
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Report path; `<run-dir>/evidence.json` when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Chain CSV written by `sample`
    #[arg(long)]
    pub chain: PathBuf,
    /// Sidecar with timings; `chain.json` next to the chain when omitted
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub burn_in: usize,
    /// Table path; standard output when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Smoke,
    Desk,
    Paper,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study name; `list` prints the available studies
    pub name: String,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_fix(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), v))
}
