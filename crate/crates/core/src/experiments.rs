//! Manufactured-solution convergence studies on the unit square with `μ = 1`.
//!
//! * `smooth`: stream-function velocity, `p = sin(2πx) sin(2πy)`
//! * `quadrature`: same velocity, `p = α sin(2πx) sin(2πy)`, composite or standard load rule
//! * `locking`: same velocity, `p = (x - 1/2)(y - 1/2)`, varying penalty
//! * `inhomogeneous`: `u = (q, q)` with `q = x(1-x)y(1-y)`, `div u = g != 0`

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::analysis::{eoc, h1_error, l2_error};
use crate::assembly::{
    assemble_divergence, assemble_load, assemble_new, assemble_pressure_load, assemble_standard, ExactSolution,
    GradientField, LoadMode, LoadSpec, QuadratureLayout, SaddleSystem, VectorField,
};
use crate::divfix::{build_smoother, SmootherRep};
use crate::error::{Result, StokesError};
use crate::mesh::{Mesh, MeshFamily, Point};
use crate::solver::{solve, SolverKind, SolverOptions, StokesSolution};
use crate::spaces::{build_space, Constraint, FeSpace, SpaceFamily};
use crate::sparse::CsrMatrix;

/// Finest level run without `large`.
pub const DEFAULT_MAX_LEVEL: u32 = 6;
/// Finest level supported at all.
pub const MAX_LEVEL: u32 = 8;
pub const DEFAULT_ETA: f64 = 2.0;
/// Velocity degree ℓ of the experiments (pressure degree ℓ - 2).
pub const VELOCITY_DEGREE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentName {
    Smooth,
    Quadrature,
    Locking,
    Inhomogeneous,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 4] =
        [ExperimentName::Smooth, ExperimentName::Quadrature, ExperimentName::Locking, ExperimentName::Inhomogeneous];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentName::Smooth => "smooth",
            ExperimentName::Quadrature => "quadrature",
            ExperimentName::Locking => "locking",
            ExperimentName::Inhomogeneous => "inhomogeneous",
        }
    }
}

impl FromStr for ExperimentName {
    type Err = StokesError;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| StokesError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Discretization {
    /// Dirichlet form with the plain load.
    Standard,
    /// Augmented form with the smoothed load.
    New,
}

impl Discretization {
    pub fn name(self) -> &'static str {
        match self {
            Discretization::Standard => "standard",
            Discretization::New => "new",
        }
    }
}

impl FromStr for Discretization {
    type Err = StokesError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Discretization::Standard),
            "new" => Ok(Discretization::New),
            other => Err(StokesError::InvalidConfig(format!("unknown discretization `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub family: MeshFamily,
    pub n_min: u32,
    pub n_max: u32,
    pub eta: f64,
    pub alpha: f64,
    pub quadrature: QuadratureLayout,
    pub disc: Discretization,
    pub solver: SolverOptions,
    /// Permits levels beyond [`DEFAULT_MAX_LEVEL`].
    pub large: bool,
}

impl ExperimentSpec {
    /// Defaults for an experiment: crisscross meshes, `N = 0..=6`, `η = 2`, `α = 1`,
    /// composite load rule, new discretization, direct solver.
    pub fn new(name: ExperimentName) -> Self {
        ExperimentSpec {
            name,
            family: MeshFamily::Crisscross,
            n_min: 0,
            n_max: DEFAULT_MAX_LEVEL,
            eta: DEFAULT_ETA,
            alpha: 1.0,
            quadrature: QuadratureLayout::Composite,
            disc: Discretization::New,
            solver: SolverOptions::default(),
            large: false,
        }
    }

    pub fn levels(mut self, n_min: u32, n_max: u32) -> Self {
        self.n_min = n_min;
        self.n_max = n_max;
        self
    }
    pub fn family(mut self, family: MeshFamily) -> Self {
        self.family = family;
        self
    }
    pub fn eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }
    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
    pub fn quadrature(mut self, q: QuadratureLayout) -> Self {
        self.quadrature = q;
        self
    }
    pub fn disc(mut self, d: Discretization) -> Self {
        self.disc = d;
        self
    }

    /// Rejects parameter combinations the experiments do not define.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(StokesError::InvalidConfig(msg));
        if self.n_min > self.n_max {
            return bad(format!("empty level range {}..={}", self.n_min, self.n_max));
        }
        let cap = if self.large { MAX_LEVEL } else { DEFAULT_MAX_LEVEL };
        if self.n_max > cap {
            return bad(format!(
                "level {} exceeds the limit {cap}{}",
                self.n_max,
                if self.large { "" } else { " (pass --large for up to 8)" }
            ));
        }
        if self.disc == Discretization::New && !(self.eta.is_finite() && self.eta > 1.0) {
            return Err(StokesError::InvalidPenalty(self.eta));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("pressure amplitude must be positive, got {}", self.alpha));
        }
        if self.name != ExperimentName::Quadrature && self.alpha != 1.0 {
            return bad(format!("`{}` has a fixed pressure; alpha applies to `quadrature` only", self.name.name()));
        }
        if self.name != ExperimentName::Locking && self.family != MeshFamily::Crisscross {
            return bad(format!("`{}` runs on crisscross meshes only", self.name.name()));
        }
        if matches!(self.name, ExperimentName::Quadrature | ExperimentName::Locking) && self.disc != Discretization::New
        {
            return bad(format!("`{}` studies the new discretization only", self.name.name()));
        }
        if self.solver.tol.is_nan() || self.solver.tol <= 0.0 {
            return bad(format!("solver tolerance must be positive, got {}", self.solver.tol));
        }
        Ok(())
    }
}

/// Velocity `Curl(a(x) a(y))` with `a(s) = s^2 (1-s)^2`.
/// Returns the velocity, its gradient and its Laplacian.
fn stream_velocity() -> (VectorField, GradientField, VectorField) {
    let u = |x: Point| [a(x[0]) * a1(x[1]), -a1(x[0]) * a(x[1])];
    let grad = |x: Point| [[a1(x[0]) * a1(x[1]), a(x[0]) * a2(x[1])], [-a2(x[0]) * a(x[1]), -a1(x[0]) * a1(x[1])]];
    let lap = |x: Point| [a2(x[0]) * a1(x[1]) + a(x[0]) * a3(x[1]), -a3(x[0]) * a(x[1]) - a1(x[0]) * a2(x[1])];
    (Arc::new(u), Arc::new(grad), Arc::new(lap))
}

fn a(s: f64) -> f64 {
    s * s * (1.0 - s) * (1.0 - s)
}
fn a1(s: f64) -> f64 {
    2.0 * s - 6.0 * s * s + 4.0 * s * s * s
}
fn a2(s: f64) -> f64 {
    2.0 - 12.0 * s + 12.0 * s * s
}
fn a3(s: f64) -> f64 {
    -12.0 + 24.0 * s
}

/// Manufactured data with hand-coded derivatives; `f = -Δu + ∇p` (`μ = 1`).
pub fn manufactured(name: ExperimentName, alpha: f64) -> LoadSpec {
    match name {
        ExperimentName::Smooth | ExperimentName::Quadrature => {
            let alpha = if name == ExperimentName::Smooth { 1.0 } else { alpha };
            let (u, grad_u, lap) = stream_velocity();
            let p = move |x: Point| alpha * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
            let grad_p = move |x: Point| {
                [
                    alpha * 2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin(),
                    alpha * 2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(),
                ]
            };
            let f = move |x: Point| {
                let (l, g) = (lap(x), grad_p(x));
                [-l[0] + g[0], -l[1] + g[1]]
            };
            LoadSpec { f: Arc::new(f), g: None, exact: Some(ExactSolution { u, grad_u, p: Arc::new(p) }), alpha }
        }
        ExperimentName::Locking => {
            let (u, grad_u, lap) = stream_velocity();
            let p = |x: Point| (x[0] - 0.5) * (x[1] - 0.5);
            let f = move |x: Point| {
                let l = lap(x);
                [-l[0] + (x[1] - 0.5), -l[1] + (x[0] - 0.5)]
            };
            LoadSpec { f: Arc::new(f), g: None, exact: Some(ExactSolution { u, grad_u, p: Arc::new(p) }), alpha: 1.0 }
        }
        ExperimentName::Inhomogeneous => {
            let q = |x: Point| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
            let qx = |x: Point| (1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]);
            let qy = |x: Point| x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1]);
            let lap_q = |x: Point| -2.0 * x[1] * (1.0 - x[1]) - 2.0 * x[0] * (1.0 - x[0]);
            let u = move |x: Point| [q(x), q(x)];
            let grad_u = move |x: Point| [[qx(x), qy(x)], [qx(x), qy(x)]];
            let p = |x: Point| (x[0] - 0.5) * (x[1] - 0.5);
            let f = move |x: Point| [-lap_q(x) + (x[1] - 0.5), -lap_q(x) + (x[0] - 0.5)];
            let g = move |x: Point| qx(x) + qy(x);
            LoadSpec {
                f: Arc::new(f),
                g: Some(Arc::new(g)),
                exact: Some(ExactSolution { u: Arc::new(u), grad_u: Arc::new(grad_u), p: Arc::new(p) }),
                alpha: 1.0,
            }
        }
    }
}

/// Mesh, spaces and load-independent operators of one refinement level.
pub struct Level {
    pub family: MeshFamily,
    pub n: u32,
    pub mesh: Arc<Mesh>,
    pub velocity: Arc<FeSpace>,
    pub pressure: Arc<FeSpace>,
    pub smoother: SmootherRep,
    pub a_std: CsrMatrix,
    pub b: CsrMatrix,
    a_new: Mutex<Vec<(u64, Arc<CsrMatrix>)>>,
}

impl Level {
    pub fn new(family: MeshFamily, n: u32) -> Result<Self> {
        let mesh = Arc::new(family.build(n));
        let velocity = build_space(&mesh, SpaceFamily::Continuous, VELOCITY_DEGREE, 2, Constraint::DirichletZero)?;
        let pressure = build_space(&mesh, SpaceFamily::Discontinuous, VELOCITY_DEGREE - 2, 1, Constraint::ZeroMean)?;
        let smoother = build_smoother(&velocity)?;
        let a_std = assemble_standard(&velocity);
        let b = assemble_divergence(&velocity, &pressure);
        Ok(Level { family, n, mesh, velocity, pressure, smoother, a_std, b, a_new: Mutex::new(Vec::new()) })
    }

    /// Augmented form for penalty `eta`, assembled once per value.
    pub fn a_new(&self, eta: f64) -> Result<Arc<CsrMatrix>> {
        let key = eta.to_bits();
        if let Some((_, m)) = self.a_new.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return Ok(m.clone());
        }
        let m = Arc::new(assemble_new(&self.smoother, eta)?);
        self.a_new.lock().unwrap().push((key, m.clone()));
        Ok(m)
    }

    /// Number of mean-free pressure unknowns.
    pub fn pressure_dofs(&self) -> usize {
        self.pressure.dim() - 1
    }
}

/// Levels shared between runs, keyed by mesh family and level.
#[derive(Default)]
pub struct LevelCache {
    levels: HashMap<(MeshFamily, u32), Arc<Level>>,
}

impl LevelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, family: MeshFamily, n: u32) -> Result<Arc<Level>> {
        if let Some(l) = self.levels.get(&(family, n)) {
            return Ok(l.clone());
        }
        let level = Arc::new(Level::new(family, n)?);
        self.levels.insert((family, n), level.clone());
        Ok(level)
    }

    pub fn clear(&mut self) {
        self.levels.clear();
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub experiment: ExperimentName,
    pub family: MeshFamily,
    pub n: u32,
    pub cells: usize,
    pub dofs_u: usize,
    pub dofs_p: usize,
    /// `None` for the standard discretization.
    pub eta: Option<f64>,
    pub alpha: f64,
    pub quadrature: QuadratureLayout,
    pub disc: Discretization,
    pub h1_u: f64,
    pub l2_p: f64,
    pub eoc_h1: Option<f64>,
    pub eoc_l2: Option<f64>,
    pub wall_ms: u128,
}

pub const CSV_HEADER: &str =
    "experiment,family,N,cells,dofs_u,dofs_p,eta,alpha,quadrature,disc,h1_u,l2_p,eoc_h1,eoc_l2,wall_ms";

impl ErrorRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.2}"));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.6e},{:.6e},{},{},{}",
            self.experiment.name(),
            self.family.name(),
            self.n,
            self.cells,
            self.dofs_u,
            self.dofs_p,
            self.eta.map_or(String::new(), |e| format!("{e}")),
            self.alpha,
            self.quadrature.name(),
            self.disc.name(),
            self.h1_u,
            self.l2_p,
            opt(self.eoc_h1),
            opt(self.eoc_l2),
            self.wall_ms
        )
    }
}

/// Error series of one experiment over its level range.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{}", r.to_csv()).unwrap();
        }
        s
    }

    pub fn h1(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.h1_u).collect()
    }
    pub fn l2(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l2_p).collect()
    }
    pub fn row(&self, n: u32) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Assembles the saddle-point system of `spec` on `level`.
pub fn build_system(level: &Level, spec: &ExperimentSpec, load: &LoadSpec) -> Result<SaddleSystem> {
    let (a, eta, smoother, mode) = match spec.disc {
        Discretization::Standard => (Arc::new(level.a_std.clone()), None, None, LoadMode::Plain),
        Discretization::New => (level.a_new(spec.eta)?, Some(spec.eta), Some(&level.smoother), LoadMode::Smoothed),
    };
    let f = assemble_load(&level.velocity, smoother, load.f.as_ref(), mode, spec.quadrature)?;
    let g = match &load.g {
        Some(g) => assemble_pressure_load(&level.pressure, g.as_ref()),
        None => vec![0.0; level.pressure.dim()],
    };
    SaddleSystem::new(level.velocity.clone(), level.pressure.clone(), &a, level.b.clone(), f, g, 1.0, eta)
}

/// Solves one level and measures the errors.
pub fn run_level(level: &Level, spec: &ExperimentSpec) -> Result<(StokesSolution, ErrorRow)> {
    let start = Instant::now();
    let load = manufactured(spec.name, spec.alpha);
    let system = build_system(level, spec, &load)?;
    let solution = solve(&system, &spec.solver)?;
    let exact = load.exact.as_ref().expect("manufactured problems carry their solution");
    let h1_u = h1_error(&solution.u, exact.grad_u.as_ref());
    let l2_p = l2_error(&solution.p, exact.p.as_ref());
    let row = ErrorRow {
        experiment: spec.name,
        family: spec.family,
        n: level.n,
        cells: level.mesh.n_cells(),
        dofs_u: level.velocity.dim(),
        dofs_p: level.pressure_dofs(),
        eta: (spec.disc == Discretization::New).then_some(spec.eta),
        alpha: spec.alpha,
        quadrature: spec.quadrature,
        disc: spec.disc,
        h1_u,
        l2_p,
        eoc_h1: None,
        eoc_l2: None,
        wall_ms: start.elapsed().as_millis(),
    };
    Ok((solution, row))
}

/// Runs `spec` over its level range, reusing levels from `cache`.
pub fn run_cached(spec: &ExperimentSpec, cache: &mut LevelCache) -> Result<ErrorReport> {
    spec.validate()?;
    let mut rows: Vec<ErrorRow> = Vec::new();
    for n in spec.n_min..=spec.n_max {
        let level = cache.get(spec.family, n)?;
        let (_, mut row) = run_level(&level, spec)?;
        if let Some(prev) = rows.last() {
            row.eoc_h1 = Some(eoc(prev.h1_u, row.h1_u)?);
            row.eoc_l2 = Some(eoc(prev.l2_p, row.l2_p)?);
        }
        rows.push(row);
    }
    Ok(ErrorReport { rows })
}

pub fn run(spec: &ExperimentSpec) -> Result<ErrorReport> {
    run_cached(spec, &mut LevelCache::new())
}

/// Errors of the locking problem for every `(family, η)` pair over a level range.
pub fn locking_diagnostic(
    families: &[MeshFamily],
    n_min: u32,
    n_max: u32,
    etas: &[f64],
    cache: &mut LevelCache,
) -> Result<Vec<(MeshFamily, f64, ErrorReport)>> {
    let mut out = Vec::new();
    for &family in families {
        for &eta in etas {
            let mut spec = ExperimentSpec::new(ExperimentName::Locking).family(family).eta(eta).levels(n_min, n_max);
            spec.large = n_max > DEFAULT_MAX_LEVEL;
            spec.solver.kind = solver_for_level(spec.solver.kind, n_max);
            out.push((family, eta, run_cached(&spec, cache)?));
        }
    }
    Ok(out)
}

/// Picks the iterative solver automatically above [`DEFAULT_MAX_LEVEL`].
pub fn solver_for_level(requested: SolverKind, n: u32) -> SolverKind {
    if n > DEFAULT_MAX_LEVEL {
        SolverKind::Schur
    } else {
        requested
    }
}
