//! Command-line front end: experiment selection, validation, CSV output and
//! plot data for log-log error curves.

pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stokes_qopr::experiments::{run_cached, solver_for_level, DEFAULT_ETA, DEFAULT_MAX_LEVEL};
use stokes_qopr::{
    Discretization, ErrorReport, ExperimentName, ExperimentSpec, LevelCache, MeshFamily, QuadratureLayout, SolverKind,
    SolverOptions, StokesError,
};
use thiserror::Error;

pub use plot::{emit_plotdata, emit_svg, Curve};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "STOKES_QOPR_THREADS";

#[derive(Error, Debug)]
pub enum CliError {
    #[error(transparent)]
    Stokes(#[from] StokesError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("empty series for curve `{0}`")]
    EmptySeries(String),
    #[error("invalid value for {var}: `{value}`")]
    Env { var: &'static str, value: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "stokes-qopr",
    version,
    about = "Convergence studies for P2/P0 Stokes discretizations on the unit square"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one experiment over a range of refinement levels and print CSV.
    Run(RunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// smooth | quadrature | locking | inhomogeneous
    pub experiment: ExperimentName,
    /// diagonal | crisscross
    #[arg(long, default_value = "crisscross")]
    pub family: MeshFamily,
    #[arg(long, default_value_t = 0)]
    pub nmin: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_LEVEL)]
    pub nmax: u32,
    /// Penalty of the new discretization, must exceed 1.
    #[arg(long, conflicts_with = "etas")]
    pub eta: Option<f64>,
    /// Several penalties, one CSV block each.
    #[arg(long, value_delimiter = ',')]
    pub etas: Vec<f64>,
    /// Pressure amplitude (quadrature experiment only).
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// composite | standard
    #[arg(long, default_value = "composite")]
    pub quadrature: QuadratureLayout,
    /// new | standard
    #[arg(long, default_value = "new")]
    pub disc: Discretization,
    /// direct | schur; defaults to direct, or schur above level 6.
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Directory for the CSV and plot data.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render an SVG log-log plot per block (requires --out).
    #[arg(long, requires = "out")]
    pub svg: bool,
    /// Write the finest mesh in plain-text format.
    #[arg(long)]
    pub dump_mesh: Option<PathBuf>,
    /// Allow levels 7 and 8.
    #[arg(long)]
    pub large: bool,
}

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub specs: Vec<ExperimentSpec>,
    pub out: Option<PathBuf>,
    pub svg: bool,
    pub dump_mesh: Option<PathBuf>,
}

impl RunConfig {
    /// Expands the penalty list and validates every resulting spec before any compute.
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let etas = match (args.eta, args.etas.is_empty()) {
            (Some(eta), _) => vec![eta],
            (None, false) => args.etas.clone(),
            (None, true) => vec![DEFAULT_ETA],
        };
        let kind = args.solver.unwrap_or(solver_for_level(SolverKind::Direct, args.nmax));
        let specs = etas
            .iter()
            .map(|&eta| {
                let spec = ExperimentSpec {
                    solver: SolverOptions { kind, ..SolverOptions::default() },
                    large: args.large,
                    ..ExperimentSpec::new(args.experiment)
                        .family(args.family)
                        .levels(args.nmin, args.nmax)
                        .eta(eta)
                        .alpha(args.alpha)
                        .quadrature(args.quadrature)
                        .disc(args.disc)
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunConfig { specs, out: args.out.clone(), svg: args.svg, dump_mesh: args.dump_mesh.clone() })
    }

    /// File stem shared by the outputs of one spec.
    pub fn stem(spec: &ExperimentSpec) -> String {
        let mut s = format!("{}_{}_{}", spec.name.name(), spec.family.name(), spec.disc.name());
        if spec.disc == Discretization::New {
            s.push_str(&format!("_eta{}", spec.eta));
        }
        if spec.name == ExperimentName::Quadrature {
            s.push_str(&format!("_{}_alpha{}", spec.quadrature.name(), spec.alpha));
        }
        s
    }
}

/// Caps the global thread pool from [`THREADS_ENV`] if set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|n| *n > 0).ok_or(CliError::Env { var: THREADS_ENV, value })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::ThreadPool(e.to_string()))
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

/// Runs every spec, writes the requested files and returns the CSV text.
pub fn execute(config: &RunConfig) -> Result<String> {
    if let Some(path) = &config.dump_mesh {
        let spec = &config.specs[0];
        spec.family.build(spec.n_max).dump(path)?;
    }
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    }
    let mut cache = LevelCache::new();
    let mut reports: Vec<(&ExperimentSpec, ErrorReport)> = Vec::new();
    for spec in &config.specs {
        reports.push((spec, run_cached(spec, &mut cache)?));
    }
    let mut csv = String::from(stokes_qopr::experiments::CSV_HEADER);
    csv.push('\n');
    for (_, report) in &reports {
        for row in &report.rows {
            csv.push_str(&row.to_csv());
            csv.push('\n');
        }
    }
    if let Some(dir) = &config.out {
        write(dir.join(format!("{}.csv", config.specs[0].name.name())), &csv)?;
        for (spec, report) in &reports {
            let stem = RunConfig::stem(spec);
            let curves = Curve::from_report(report);
            for curve in &curves {
                emit_plotdata(curve, &dir.join(format!("{stem}_{}.dat", curve.label)))?;
            }
            if config.svg {
                emit_svg(&curves, &stem, &dir.join(format!("{stem}.svg")))?;
            }
        }
    }
    Ok(csv)
}
