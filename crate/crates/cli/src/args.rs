use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "trapping",
    version,
    about = "Trapping-region certification for quadratic systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write a certificate, stage report and chi sweep.
    Analyze(AnalyzeArgs),
    /// Print the generalized lossless structure of a system.
    Lossless(LosslessArgs),
    /// Verify a certificate file against a system.
    Certify(CertifyArgs),
    /// Monte-Carlo simulation and empirical ultimate bound.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Built-in system: mls, academic2d, lorenz or lorenz(sigma,rho,eta).
    #[arg(long)]
    pub fixture: Option<String>,
    /// System JSON file with fields n, A, Q, d.
    #[arg(long)]
    pub system: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    Airfoil,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub delta_m: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Logarithmic grid `lo:hi:count`.
    #[arg(long, value_name = "LO:HI:COUNT")]
    pub chi_grid: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub constraint_mode: Option<Mode>,
    /// Skip the shift search and use this shift.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        value_name = "V1,...,VN"
    )]
    pub fix_shift: Option<Vec<f64>>,
    #[arg(long)]
    pub trust_radius: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Print published reference values for a system supplied by file.
    #[arg(long, value_enum)]
    pub compare: Option<Reference>,
}

#[derive(Debug, Args)]
pub struct LosslessArgs {
    #[command(flatten)]
    pub source: Source,
    /// Also write `structure.json` to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub certificate: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Overrides the margin stored in the certificate's config.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `verify.json` to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: Source,
    /// Check invariance of every trial against this certificate.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tail_fraction: f64,
    /// Initial states are uniform on `[-w, w]^n`.
    #[arg(long, default_value_t = 100.0)]
    pub init_range: f64,
    /// Also write `montecarlo.json` and the first trial's `trajectory.csv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
