//! Benchmark problems, manufactured-solution verification and CSV reports.

pub mod mms;
mod problems;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use mms::{mms_viscosity, MmsSolution, Poly2};
pub use problems::{
    bfs_mesh, build_problem, coarse_mesh, inflow_2d, inflow_3d, lid_2d, lid_3d, Benchmark,
    ProblemConfig,
};

use crate::assembly::{DiscreteState, Discretization, Linearization};
use crate::fem::{FemError, QuadratureRule};
use crate::mesh::MeshError;
use crate::multigrid::MultigridError;
use crate::nonlinear::{
    continuation_plan, ContinuationReport, OuterPreconditioner, Solver, SolverOptions, StageReport,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown benchmark `{0}` (expected ldc2d, ldc3d, bfs2d, bfs3d or mms3d)")]
    UnknownBenchmark(String),
    #[error("mesh file {0} does not exist")]
    MissingMesh(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Assembly(#[from] crate::assembly::AssemblyError),
    #[error(transparent)]
    Multigrid(#[from] MultigridError),
    #[error("writing reports: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// L² norms of the velocity and pressure errors against the manufactured solution.
pub fn error_norms(disc: &Discretization, state: &DiscreteState, exact: &MmsSolution) -> (f64, f64) {
    let dim = disc.dim();
    let rule = QuadratureRule::new(dim, disc.velocity.spec.degree() + 5);
    let mut ev = 0.0;
    let mut ep = 0.0;
    for c in 0..disc.mesh.num_cells() {
        let scale = disc.geometry[c].scale();
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let lam = &p[..=dim];
            let x = disc.mesh.from_barycentric(c, lam);
            let uh = disc.eval_velocity(&state.u, c, lam);
            let u = exact.velocity(&x);
            let du: f64 = (0..dim).map(|k| (uh[k] - u[k]).powi(2)).sum();
            ev += w * scale * du;
            ep += w * scale * (state.p[c] - exact.pressure(&x)).powi(2);
        }
    }
    (ev.sqrt(), ep.sqrt())
}

/// One benchmark invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    /// Continuation targets up to this Reynolds number.
    pub re_max: f64,
    /// Solve at exactly this Reynolds number (after the Stokes guess) instead of
    /// the continuation ladder.
    pub re: Option<f64>,
    pub gammas: Vec<f64>,
    pub delta_d: Option<f64>,
    pub linearization: Linearization,
    pub outer: OuterPreconditioner,
    /// Manufactured-solution runs: refinements 1..=levels.
    pub mms_levels: usize,
    pub max_krylov: Option<usize>,
}

impl RunConfig {
    pub fn new(problem: ProblemConfig) -> Self {
        let dim = problem.benchmark.dim();
        let defaults = SolverOptions::for_dim(dim);
        RunConfig {
            problem,
            re_max: if dim == 3 { 5000.0 } else { 10000.0 },
            re: None,
            gammas: vec![defaults.gamma],
            delta_d: None,
            linearization: Linearization::Newton,
            outer: defaults.outer,
            mms_levels: 3,
            max_krylov: None,
        }
    }

    pub fn solver_options(&self, gamma: f64) -> SolverOptions {
        let mut o = SolverOptions::for_dim(self.problem.benchmark.dim());
        o.gamma = gamma;
        if let Some(d) = self.delta_d {
            o.delta_d = d;
        }
        o.linearization = self.linearization;
        if self.linearization == Linearization::Picard {
            o.newton.max_iterations = 200;
        }
        o.outer = self.outer;
        if let Some(k) = self.max_krylov {
            o.krylov.max_iterations = k;
        }
        o
    }

    pub fn plan(&self) -> Vec<f64> {
        match self.re {
            Some(re) => vec![re],
            None => continuation_plan(self.problem.benchmark.dim(), self.re_max),
        }
    }
}

/// Continuation run for one grad-div parameter.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub benchmark: String,
    pub element: String,
    pub refinements: usize,
    pub gamma: f64,
    pub report: ContinuationReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmsRow {
    pub refinements: usize,
    pub h: f64,
    pub gamma: f64,
    pub re: f64,
    pub velocity_error: f64,
    pub pressure_error: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default)]
pub struct BenchOutcome {
    pub runs: Vec<RunRecord>,
    pub mms: Vec<MmsRow>,
}

impl BenchOutcome {
    pub fn converged(&self) -> bool {
        !self.runs.is_empty() && self.runs.iter().all(|r| r.report.converged() && !r.report.stages.is_empty())
    }
}

fn element_name(cfg: &ProblemConfig) -> String {
    format!("{:?}", cfg.family()).to_lowercase()
}

/// Run the configured benchmark.
pub fn run(cfg: &RunConfig) -> Result<BenchOutcome, BenchError> {
    if cfg.gammas.is_empty() {
        return Err(BenchError::Config("no grad-div parameter given".into()));
    }
    let mut out = BenchOutcome::default();
    if cfg.problem.benchmark == Benchmark::Mms3d {
        let re = cfg.re.unwrap_or(1.0);
        let exact = MmsSolution::new(re);
        for &gamma in &cfg.gammas {
            for r in 1..=cfg.mms_levels {
                let pc = ProblemConfig {
                    refinements: r,
                    ..cfg.problem.clone()
                };
                let problem = build_problem(&pc)?;
                let solver = Solver::new(&problem, cfg.solver_options(gamma));
                let report = solver.continuation(&[re]);
                let (ev, ep) = match &report.state {
                    Some(s) => error_norms(problem.finest(), s, &exact),
                    None => (f64::NAN, f64::NAN),
                };
                let h = 2.0 / (pc.coarse as f64 * (1u64 << r) as f64);
                log::info!("mms h {h}: velocity error {ev:e}, pressure error {ep:e}");
                out.mms.push(MmsRow {
                    refinements: r,
                    h,
                    gamma,
                    re,
                    velocity_error: ev,
                    pressure_error: ep,
                    converged: report.converged(),
                });
                out.runs.push(RunRecord {
                    benchmark: problem.name.clone(),
                    element: element_name(&pc),
                    refinements: r,
                    gamma,
                    report,
                });
            }
        }
        return Ok(out);
    }
    let problem = build_problem(&cfg.problem)?;
    let plan = cfg.plan();
    for &gamma in &cfg.gammas {
        let solver = Solver::new(&problem, cfg.solver_options(gamma));
        // SIMPLE runs without augmentation
        let gamma = match cfg.outer {
            OuterPreconditioner::Simple => 0.0,
            OuterPreconditioner::AugmentedLagrangian(_) => gamma,
        };
        let report = solver.continuation(&plan);
        out.runs.push(RunRecord {
            benchmark: problem.name.clone(),
            element: element_name(&cfg.problem),
            refinements: cfg.problem.refinements,
            gamma,
            report,
        });
    }
    Ok(out)
}

fn e(v: f64) -> String {
    format!("{v:e}")
}

fn stage_row(run: &RunRecord, s: &StageReport) -> Vec<String> {
    vec![
        run.benchmark.clone(),
        run.element.clone(),
        run.refinements.to_string(),
        e(run.gamma),
        e(s.re),
        s.converged.to_string(),
        s.newton_steps().to_string(),
        s.total_krylov().to_string(),
        e(s.average_krylov()),
        e(s.residuals.last().copied().unwrap_or(f64::NAN)),
        s.krylov_iterations
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    ]
}

pub const REPORT_HEADER: [&str; 11] = [
    "benchmark",
    "element",
    "refinements",
    "gamma",
    "re",
    "converged",
    "newton_steps",
    "krylov_total",
    "krylov_average",
    "final_residual",
    "krylov_per_step",
];

/// Stage table without timings (identical across thread counts).
pub fn report_csv(outcome: &BenchOutcome) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for run in &outcome.runs {
        for s in &run.report.stages {
            w.write_record(stage_row(run, s))?;
        }
    }
    into_string(w)
}

pub fn history_csv(outcome: &BenchOutcome) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["benchmark", "refinements", "gamma", "re", "step", "residual", "krylov_iterations", "step_length"])?;
    for run in &outcome.runs {
        for s in &run.report.stages {
            for (k, r) in s.residuals.iter().enumerate() {
                let (kr, lam) = if k == 0 {
                    (String::new(), String::new())
                } else {
                    (
                        s.krylov_iterations.get(k - 1).map(|v| v.to_string()).unwrap_or_default(),
                        s.step_lengths.get(k - 1).map(|v| e(*v)).unwrap_or_default(),
                    )
                };
                w.write_record([
                    run.benchmark.clone(),
                    run.refinements.to_string(),
                    e(run.gamma),
                    e(s.re),
                    k.to_string(),
                    e(*r),
                    kr,
                    lam,
                ])?;
            }
        }
    }
    into_string(w)
}

pub fn timings_csv(outcome: &BenchOutcome) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["benchmark", "refinements", "gamma", "re", "seconds"])?;
    for run in &outcome.runs {
        for s in &run.report.stages {
            w.write_record([
                run.benchmark.clone(),
                run.refinements.to_string(),
                e(run.gamma),
                e(s.re),
                format!("{:.3}", s.seconds),
            ])?;
        }
    }
    into_string(w)
}

pub fn mms_csv(outcome: &BenchOutcome) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["refinements", "h", "gamma", "re", "velocity_error", "pressure_error", "converged"])?;
    for r in &outcome.mms {
        w.write_record([
            r.refinements.to_string(),
            e(r.h),
            e(r.gamma),
            e(r.re),
            e(r.velocity_error),
            e(r.pressure_error),
            r.converged.to_string(),
        ])?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String, BenchError> {
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Write `report.csv`, `history.csv`, `timings.csv` and (for manufactured
/// solutions) `mms.csv` into `dir`.
pub fn write_reports(outcome: &BenchOutcome, dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(outcome)?)?;
    fs::write(dir.join("history.csv"), history_csv(outcome)?)?;
    fs::write(dir.join("timings.csv"), timings_csv(outcome)?)?;
    if !outcome.mms.is_empty() {
        fs::write(dir.join("mms.csv"), mms_csv(outcome)?)?;
    }
    Ok(())
}

/// Observed convergence order between two successive mesh sizes.
pub fn convergence_order(h: (f64, f64), err: (f64, f64)) -> f64 {
    (err.0 / err.1).ln() / (h.0 / h.1).ln()
}
