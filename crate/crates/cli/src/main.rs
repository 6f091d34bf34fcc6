//! `magspec`: sweeps and reports over field geometry, particle dynamics and
//! the spectral quantities of magnetic Schrödinger operators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod grid;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use grid::{Grid, ModelSpec, Momentum};
use report::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] magspec::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Io { .. } => "io",
            _ => "usage",
        }
    }
}

macro_rules! core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
core_error!(
    magspec::field::FieldError,
    magspec::dynamics::DynamicsError,
    magspec::correction::SpectralError
);

#[derive(Debug, Parser)]
#[command(name = "magspec", version, about = "Magnetic field geometry, particle dynamics and spectral asymptotics")]
pub struct Cli {
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; tabular commands default to csv, the others to json.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Tolerance override for commands that integrate or solve.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// JSON file of flag values; flags on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a trajectory of the degenerate model or of a field document.
    Trajectory(TrajectoryArgs),
    /// Guiding-centre deviation from the drift equation over a list of μ.
    DriftScan(DriftScanArgs),
    /// Critical momentum where the drift increment changes sign.
    Kstar(KstarArgs),
    /// Period, drift increment and action of the effective potential over k.
    Period(PeriodArgs),
    /// Magnetic line through a point.
    Lines(LinesArgs),
    /// Pointwise magnetic Weyl density.
    Weyl(WeylArgs),
    /// Two-dimensional Landau-level density over thresholds.
    Landau(LandauArgs),
    /// Eigenvalue count of the auxiliary 1D operator.
    Eigencount(EigencountArgs),
    /// Short-periodic-orbit correction term, the count n₀ and a fit of its closed form.
    Correction(CorrectionArgs),
    /// The universal periodic function G on a grid.
    Gfunc(GfuncArgs),
    /// Fit κ and S₀ of the closed-form correction over several ħ.
    FitCorrection(FitCorrectionArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Trajectory(_) => "trajectory",
            Command::DriftScan(_) => "drift-scan",
            Command::Kstar(_) => "kstar",
            Command::Period(_) => "period",
            Command::Lines(_) => "lines",
            Command::Weyl(_) => "weyl",
            Command::Landau(_) => "landau",
            Command::Eigencount(_) => "eigencount",
            Command::Correction(_) => "correction",
            Command::Gfunc(_) => "gfunc",
            Command::FitCorrection(_) => "fit-correction",
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Command::Trajectory(_)
            | Command::DriftScan(_)
            | Command::Period(_)
            | Command::Lines(_)
            | Command::Landau(_)
            | Command::Gfunc(_) => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// Field given as a JSON document or as a model name.
#[derive(Debug, Args, Clone)]
pub struct FieldArgs {
    /// Field document (JSON).
    #[arg(long, conflicts_with = "kind")]
    pub field: Option<PathBuf>,
    /// Model field name: darboux, martinet2d, model2d, nondeg4d, roussarie4d.
    #[arg(long)]
    pub kind: Option<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TrajectoryArgs {
    /// Degenerate 2D model, e.g. `nu=2`.
    #[arg(long, conflicts_with_all = ["field", "kind"])]
    pub model: Option<ModelSpec>,
    #[command(flatten)]
    pub source: FieldArgs,
    /// Model momentum ξ₂ (a number or `kstar`).
    #[arg(long, default_value = "kstar")]
    pub k: Momentum,
    #[arg(long, default_value_t = 100.0)]
    pub mu: f64,
    /// Tilt of the model potential, V = 1 − αX₁.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 8.0)]
    pub t_end: f64,
    /// Initial position (field mode).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<Grid>,
    /// Initial kinetic momentum (field mode).
    #[arg(long, allow_hyphen_values = true)]
    pub p0: Option<Grid>,
    /// Resample the path with this time step instead of listing accepted steps.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Horizon {
    Fixed,
    DriftScaled,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct DriftScanArgs {
    #[command(flatten)]
    pub source: FieldArgs,
    #[arg(long, default_value = "25,50,100,200", allow_hyphen_values = true)]
    pub mus: Grid,
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub x0: Grid,
    #[arg(long, default_value = "1,0", allow_hyphen_values = true)]
    pub p0: Grid,
    /// Run length at the smallest μ.
    #[arg(long, default_value_t = 2.0)]
    pub t_end: f64,
    #[arg(long, value_enum, default_value_t = Horizon::DriftScaled)]
    pub horizon: Horizon,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct KstarArgs {
    #[arg(long, default_value_t = 2)]
    pub nu: u32,
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PeriodArgs {
    #[arg(long, default_value_t = 2)]
    pub nu: u32,
    #[arg(long, default_value = "0.05:1.5:0.05", allow_hyphen_values = true)]
    pub k: Grid,
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct LinesArgs {
    #[command(flatten)]
    pub source: FieldArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<Grid>,
    /// Signed arc length.
    #[arg(long, default_value_t = 10.0)]
    pub length: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct WeylArgs {
    #[command(flatten)]
    pub source: FieldArgs,
    /// Evaluation point (field mode).
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<Grid>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    /// Intensities f₁..f_r.
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<Grid>,
    /// Scalar potential V (overrides the field's scalar).
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub energy: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    /// det(g^{jk})⁻¹ (explicit mode).
    #[arg(long, default_value_t = 1.0)]
    pub g: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct LandauArgs {
    #[arg(long, default_value_t = 1.0)]
    pub f: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    #[arg(long, default_value_t = 1.0)]
    pub g: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub tau: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountMethodArg {
    Fd,
    Bs,
    Both,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct EigencountArgs {
    #[arg(long, default_value_t = 2)]
    pub nu: u32,
    #[arg(long, default_value_t = 0.05)]
    pub hbar: f64,
    #[arg(long, default_value_t = 0.0)]
    pub xi2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = CountMethodArg::Both)]
    pub method: CountMethodArg,
    /// Initial finite-difference grid.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Also list the eigenvalues below the threshold.
    #[arg(long)]
    pub eigenvalues: bool,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CorrectionArgs {
    #[arg(long, default_value_t = 2)]
    pub nu: u32,
    #[arg(long, default_value_t = 0.05)]
    pub hbar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// ξ₂ values at which n₀ is listed (default: 201 points over the support).
    #[arg(long, allow_hyphen_values = true)]
    pub xi2_grid: Option<Grid>,
    /// Action periods swept in W for the fit.
    #[arg(long, default_value_t = 4)]
    pub periods: usize,
    /// Samples per action period.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long)]
    pub no_fit: bool,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct GfuncArgs {
    #[arg(long, default_value = "0:1:0.001", allow_hyphen_values = true)]
    pub t_grid: Grid,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FitCorrectionArgs {
    #[arg(long, default_value_t = 2)]
    pub nu: u32,
    #[arg(long, default_value = "0.05,0.04,0.03,0.025,0.02", allow_hyphen_values = true)]
    pub hbar: Grid,
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// Samples per action period at each ħ.
    #[arg(long, default_value_t = 24)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.5)]
    pub s0_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub s0_max: f64,
}

fn parse(args: &[OsString]) -> Result<Cli, clap::Error> {
    Cli::try_parse_from(args)
}

fn run(args: Vec<OsString>) -> Result<(), CliError> {
    let cli = match parse(&args) {
        Ok(cli) => cli,
        Err(e) => return clap_failure(e),
    };
    let cli = match &cli.config {
        Some(path) => {
            let cfg = config::read_config(path)?;
            match parse(&config::merge(&args, &cfg, cli.command.name())?) {
                Ok(cli) => cli,
                Err(e) => return clap_failure(e),
            }
        }
        None => cli,
    };
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
        }
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let format = cli.format.unwrap_or_else(|| cli.command.default_format());
    let report = commands::execute(&cli.command, cli.tol)?;
    report.emit(format, cli.out.as_deref())
}

fn clap_failure(e: clap::Error) -> Result<(), CliError> {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            e.exit()
        }
        _ => Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let obj = json!({"error": {"kind": e.kind(), "exit_code": code, "message": e.to_string()}});
            eprintln!("{}", serde_json::to_string_pretty(&obj).expect("error object serialises"));
            ExitCode::from(code)
        }
    }
}
