//! Command-line front end: fit, quantile scans, residual and influence
//! diagnostics, quantile curves and simulation studies.

pub mod commands;
pub mod data;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pgjsb::{KernelFamily, LinkTransform, Variant};

pub use report::{Cell, Format, Report, Table};

pub const DEFAULT_SEED: u64 = 20201103;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "pgjsb", version, about = "Quantile regression for responses in (0,1)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model and report the Wald table
    Fit(FitArgs),
    /// Fit both variants over a grid of quantile levels
    Scan(ScanArgs),
    /// Quantile residuals and their normality tests
    Residuals(FitArgs),
    /// Local influence curvatures and case deletion
    Influence(InfluenceArgs),
    /// Fitted quantile curves along one covariate
    Curves(CurvesArgs),
    /// Monte Carlo recovery study
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Quantile submodel terms (`col` or `log(col)`); an intercept is always included
    #[arg(long, value_delimiter = ',', default_value = "")]
    pub quantile_covariates: Vec<String>,
    /// Scale submodel terms; an intercept is always included
    #[arg(long, value_delimiter = ',', default_value = "")]
    pub scale_covariates: Vec<String>,
    #[arg(long, default_value = "rpgjsb1", value_parser = parse_from_str::<Variant>)]
    pub variant: Variant,
    #[arg(long, default_value = "logistic", value_parser = parse_from_str::<KernelFamily>)]
    pub kernel: KernelFamily,
    #[arg(long, default_value = "logit", value_parser = parse_from_str::<LinkTransform>)]
    pub link: LinkTransform,
    /// Random restarts after the zero start
    #[arg(long, default_value_t = 100)]
    pub max_restarts: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `lo:hi:step`
    #[arg(long, default_value = "0.05:0.95:0.05")]
    pub q_grid: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InfluenceArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// case_weight, response, predictor or all
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub scheme: Vec<String>,
    /// theta, beta, nu or all
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub target: Vec<String>,
    /// Refit without this observation (1-based) and report relative changes
    #[arg(long)]
    pub drop: Option<usize>,
    /// Response scheme: drop the anchoring shift from the perturbed kernel argument
    #[arg(long)]
    pub literal_response_shift: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.25,0.5,0.75,0.95")]
    pub levels: Vec<f64>,
    /// `TERM LO HI STEPS`; TERM as given in the covariate lists
    #[arg(long, num_args = 4, value_names = ["TERM", "LO", "HI", "STEPS"], required = true)]
    pub sweep: Vec<String>,
    /// Hold a term at a value (`TERM=VALUE`, or `COL=LEVEL` for categoricals);
    /// unset numeric terms sit at their sample mean, categoricals at the reference level
    #[arg(long)]
    pub at: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// `kernel,link,q` of a published cell (repeatable)
    #[arg(long)]
    pub cell: Vec<String>,
    #[arg(long)]
    pub all_paper_cells: bool,
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub max_restarts: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_from_str<T: std::str::FromStr<Err = pgjsb::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: pgjsb::Error| e.to_string())
}

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum RunError {
    Input(anyhow::Error),
    /// The artifact (if any) was still produced.
    NotConverged(String),
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<pgjsb::Error>() {
            Some(pgjsb::Error::NotConverged(m)) => RunError::NotConverged(m.clone()),
            _ => RunError::Input(e),
        }
    }
}

/// A finished run: the report and whether every fit it needed converged.
pub struct Outcome {
    pub report: Report,
    pub converged: bool,
}

pub fn execute(command: &Command) -> Result<Outcome, RunError> {
    Ok(match command {
        Command::Fit(a) => commands::fit(a)?,
        Command::Scan(a) => commands::scan(a)?,
        Command::Residuals(a) => commands::residuals(a)?,
        Command::Influence(a) => commands::influence(a)?,
        Command::Curves(a) => commands::curves(a)?,
        Command::Simulate(a) => commands::simulate(a)?,
    })
}

fn output_of(command: &Command) -> &OutputArgs {
    match command {
        Command::Fit(a) | Command::Residuals(a) => &a.output,
        Command::Scan(a) => &a.output,
        Command::Influence(a) => &a.fit.output,
        Command::Curves(a) => &a.fit.output,
        Command::Simulate(a) => &a.output,
    }
}

/// Parses, runs and writes; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let output = output_of(&cli.command);
    match execute(&cli.command) {
        Ok(outcome) => {
            if let Err(e) = outcome.report.write(output.format, output.out.as_deref()) {
                eprintln!("error: {e:#}");
                return EXIT_INPUT;
            }
            if outcome.converged {
                EXIT_OK
            } else {
                eprintln!("error: model did not converge");
                EXIT_NOT_CONVERGED
            }
        }
        Err(RunError::Input(e)) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
        Err(RunError::NotConverged(m)) => {
            eprintln!("error: model did not converge: {m}");
            EXIT_NOT_CONVERGED
        }
    }
}

/// Sizes the global worker pool from `PGJSB_THREADS` (default: all cores).
pub fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("PGJSB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("PGJSB_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            anyhow::bail!("PGJSB_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
