use std::path::PathBuf;

use bfly_core::legendre::Parity;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "bfly",
    version,
    about = "Butterfly-compressed associated Legendre transforms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build plans and report ranks, timings, memory and accuracy.
    Bench(BenchArgs),
    /// Run the numerical property suite.
    Verify(VerifyArgs),
    /// Build, apply or inspect serialized transform plans.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Print quadrature nodes and weights as CSV.
    Quad(QuadArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ParityArg {
    Even,
    Odd,
}

impl From<ParityArg> for Parity {
    fn from(p: ParityArg) -> Parity {
        match p {
            ParityArg::Even => Parity::Even,
            ParityArg::Odd => Parity::Odd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Sizes and orders, paired position by position. A single value is
/// broadcast against the other list.
#[derive(Clone, Debug, Args)]
pub struct GridArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub m: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "even")]
    pub parity: Vec<ParityArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Case {
    pub n: usize,
    pub m: u32,
    pub parity: Parity,
}

impl GridArgs {
    pub fn cases(&self) -> CliResult<Vec<Case>> {
        let (ns, ms) = (&self.n, &self.m);
        let len = match (ns.len(), ms.len()) {
            (a, b) if a == b => a,
            (1, b) => b,
            (a, 1) => a,
            (a, b) => {
                return Err(CliError::Usage(format!(
                    "--n has {a} values and --m has {b}; give equal counts or a single value"
                )))
            }
        };
        if self.parity.is_empty() {
            return Err(CliError::Usage("--parity needs at least one value".into()));
        }
        let mut cases = Vec::new();
        for i in 0..len {
            let n = ns[i.min(ns.len() - 1)];
            let m = ms[i.min(ms.len() - 1)];
            if n == 0 {
                return Err(CliError::Usage("--n values must be positive".into()));
            }
            for &p in &self.parity {
                cases.push(Case {
                    n,
                    m,
                    parity: p.into(),
                });
            }
        }
        Ok(cases)
    }
}

#[derive(Clone, Debug, Args)]
pub struct BuildOptions {
    #[arg(long, default_value_t = 1e-14)]
    pub eps: f64,
    #[arg(long, default_value_t = 60)]
    pub block_width: usize,
    /// Directory for cached quadrature rules.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl BuildOptions {
    pub fn check(&self) -> CliResult<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(CliError::Usage(format!(
                "--eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if self.block_width == 0 {
            return Err(CliError::Usage("--block-width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub build: BuildOptions,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub output: OutputFormat,
    /// Largest dense matrix, in bytes, built for t_dir and eps_fwd.
    #[arg(long, default_value_t = 1 << 30)]
    pub dense_budget: u64,
    /// Report every timing as NA, making the output reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Transform sizes used for the adjoint and round-trip checks.
    #[arg(long, value_delimiter = ',', default_value = "64,256")]
    pub n: Vec<usize>,
    /// Orders paired with every size.
    #[arg(long, value_delimiter = ',', default_value = "0,40")]
    pub m: Vec<u32>,
    /// Random instances per randomized property.
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    /// Degrees checked per chain by the recurrence oracle.
    #[arg(long, default_value_t = 100)]
    pub degrees: usize,
    /// Scale quadrature weights by (1 + PERTURB) before the exactness check.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long, default_value_t = 1e-14)]
    pub eps: f64,
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// Build a transform plan and write it to a file.
    Build(PlanBuildArgs),
    /// Apply a stored plan to a vector file.
    Apply(PlanApplyArgs),
    /// Print statistics of a stored plan.
    Info(PlanInfoArgs),
}

#[derive(Clone, Debug, Args)]
pub struct PlanBuildArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub m: u32,
    #[arg(long, value_enum, default_value = "even")]
    pub parity: ParityArg,
    #[command(flatten)]
    pub build: BuildOptions,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct PlanApplyArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// One decimal number per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Output vector file; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Apply the inverse (transpose) instead of the forward transform.
    #[arg(long)]
    pub inverse: bool,
}

#[derive(Clone, Debug, Args)]
pub struct PlanInfoArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub output: OutputFormat,
}

#[derive(Clone, Debug, Args)]
pub struct QuadArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub m: u32,
    #[arg(long, value_enum, default_value = "even")]
    pub parity: ParityArg,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}
