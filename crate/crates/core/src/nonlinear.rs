//! Newton's method with a quadratic-model line search, the Stokes initial
//! guess, and continuation in the Reynolds number.

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::assembly::{
    AssemblyError, BlockSystem, DiscreteState, Discretization, Linearization, PhysicalParams,
    VectorField,
};
use crate::linalg::{norm2, LinalgError, Preconditioner};
use crate::multigrid::{Cycle, MgConfig, MultigridError, MultigridSetup};
use crate::saddle::{
    project_mean, solve_linearized, BlockMode, BlockPreconditioner, KrylovConfig, LinearSolution,
    MassSchur, SaddleError, SaddleOperator, SimplePreconditioner,
};

/// Body force as a function of the Reynolds number.
pub type ForceFamily = Arc<dyn Fn(f64) -> VectorField + Send + Sync>;

#[derive(Debug, Error)]
pub enum NonlinearError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Multigrid(#[from] MultigridError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("linear solve in Newton step {step} failed")]
    Linear {
        step: usize,
        #[source]
        source: SaddleError,
    },
    #[error("line search found no decrease in step {step} (residual {residual:e}, best trial {trial:e})")]
    LineSearch { step: usize, residual: f64, trial: f64 },
    #[error("no convergence in {steps} Newton steps (residual {residual:e}, target {target:e})")]
    MaxIterations {
        steps: usize,
        residual: f64,
        target: f64,
    },
}

/// A discretized flow problem on a level hierarchy.
pub struct FlowProblem {
    pub name: String,
    pub setup: MultigridSetup,
    pub dirichlet: Vec<(String, VectorField)>,
    pub force: Option<ForceFamily>,
    /// No natural boundary: the pressure is fixed by a zero mean.
    pub enclosed: bool,
    /// `nu = viscosity_scale / Re`.
    pub viscosity_scale: f64,
}

impl FlowProblem {
    pub fn finest(&self) -> &Arc<Discretization> {
        self.setup.finest()
    }

    pub fn nu(&self, re: f64) -> f64 {
        self.viscosity_scale / re
    }

    /// Zero state carrying the Dirichlet data.
    pub fn initial_state(&self) -> DiscreteState {
        let disc = self.finest();
        let mut s = DiscreteState::zeros(disc);
        disc.apply_dirichlet(&mut s.u, &self.dirichlet);
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterPreconditioner {
    AugmentedLagrangian(BlockMode),
    /// SIMPLE without augmentation; the grad-div parameter is forced to zero.
    Simple,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineSearch {
    L2,
    None,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub atol: f64,
    pub rtol: f64,
    pub max_iterations: usize,
    pub line_search: LineSearch,
}

impl NewtonConfig {
    pub fn for_dim(dim: usize) -> Self {
        NewtonConfig {
            atol: 1e-8,
            rtol: if dim == 3 { 1e-8 } else { 1e-10 },
            max_iterations: 30,
            line_search: LineSearch::L2,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub gamma: f64,
    pub delta_d: f64,
    pub linearization: Linearization,
    pub outer: OuterPreconditioner,
    pub mg: MgConfig,
    pub krylov: KrylovConfig,
    pub newton: NewtonConfig,
}

impl SolverOptions {
    pub fn for_dim(dim: usize) -> Self {
        SolverOptions {
            gamma: 1e4,
            delta_d: if dim == 3 { 1.0 / 20.0 } else { 1.0 },
            linearization: Linearization::Newton,
            outer: OuterPreconditioner::AugmentedLagrangian(BlockMode::Full),
            mg: MgConfig::for_dim(dim),
            krylov: KrylovConfig::for_dim(dim),
            newton: NewtonConfig::for_dim(dim),
        }
    }
}

/// Per-stage record of a nonlinear solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageReport {
    pub re: f64,
    pub converged: bool,
    /// Outer Krylov iterations of every Newton step.
    pub krylov_iterations: Vec<usize>,
    /// Nonlinear residual norm before the first and after every step.
    pub residuals: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub seconds: f64,
    pub failure: Option<String>,
}

impl StageReport {
    pub fn newton_steps(&self) -> usize {
        self.krylov_iterations.len()
    }

    pub fn total_krylov(&self) -> usize {
        self.krylov_iterations.iter().sum()
    }

    /// Outer Krylov iterations per Newton step.
    pub fn average_krylov(&self) -> f64 {
        if self.krylov_iterations.is_empty() {
            0.0
        } else {
            self.total_krylov() as f64 / self.newton_steps() as f64
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ContinuationReport {
    pub stages: Vec<StageReport>,
    /// State of the last converged stage.
    pub state: Option<DiscreteState>,
}

impl ContinuationReport {
    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.converged)
    }
}

/// Reynolds numbers of the default continuation: 10, 100, then steps of 100
/// in 2D; a fixed ladder in 3D. Targets above `re_max` are dropped.
pub fn continuation_plan(dim: usize, re_max: f64) -> Vec<f64> {
    let ladder: Vec<f64> = if dim == 3 {
        vec![10.0, 100.0, 1000.0, 2500.0, 5000.0]
    } else {
        std::iter::once(10.0)
            .chain((1..=100).map(|k| 100.0 * k as f64))
            .collect()
    };
    ladder.into_iter().filter(|&r| r <= re_max * (1.0 + 1e-12)).collect()
}

pub struct Solver<'a> {
    pub problem: &'a FlowProblem,
    pub opts: SolverOptions,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a FlowProblem, opts: SolverOptions) -> Self {
        Solver { problem, opts }
    }

    pub fn params(&self, re: f64) -> Result<PhysicalParams, NonlinearError> {
        let gamma = match self.opts.outer {
            OuterPreconditioner::Simple => 0.0,
            OuterPreconditioner::AugmentedLagrangian(_) => self.opts.gamma,
        };
        Ok(PhysicalParams::new(self.problem.nu(re), gamma, self.opts.delta_d, re)?)
    }

    fn force(&self, re: f64) -> Option<VectorField> {
        self.problem.force.as_ref().map(|f| f(re))
    }

    fn residual(
        &self,
        state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
    ) -> Result<(Vec<f64>, f64), NonlinearError> {
        let (mut ru, rp) = self.problem.finest().assemble_residual(state, params, force)?;
        ru.extend_from_slice(&rp);
        let n = norm2(&ru);
        Ok((ru, n))
    }

    /// Assemble the linearization at `state` and solve for the update.
    pub fn linear_solve(
        &self,
        state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
        lin: Linearization,
    ) -> Result<(BlockSystem, Result<LinearSolution, SaddleError>), NonlinearError> {
        let setup = &self.problem.setup;
        let sys = self.problem.finest().assemble_jacobian(state, params, force, lin)?;
        let mats = setup.rediscretize(sys.a.clone(), state, params, force, lin)?;
        let enclosed = self.problem.enclosed;
        let mp = enclosed.then_some(sys.mp.as_slice());
        let result = match self.opts.outer {
            OuterPreconditioner::AugmentedLagrangian(mode) => {
                let mg = setup.build(mats, self.opts.mg)?;
                let schur = MassSchur::new(params.nu, params.gamma, &sys.mp);
                let prec = BlockPreconditioner {
                    a_inv: &mg,
                    s_inv: &schur,
                    b: &sys.b,
                    bt: &sys.bt,
                    mode,
                    enclosed: mp,
                };
                solve_linearized(&sys, &prec, &self.opts.krylov, enclosed)
            }
            OuterPreconditioner::Simple => {
                let mg = setup.build(mats, self.opts.mg.with_cycle(Cycle::V))?;
                let prec = SimplePreconditioner::new(&sys.a, &sys.b, &sys.bt, &mg, mp)?;
                solve_linearized(&sys, &prec as &dyn Preconditioner, &self.opts.krylov, enclosed)
            }
        };
        Ok((sys, result))
    }

    /// Solution of the Stokes problem (no advection, no augmentation) with the
    /// viscosity of Reynolds number `re`.
    pub fn stokes_initial_guess(&self, re: f64) -> Result<(DiscreteState, StageReport), NonlinearError> {
        let params = self.params(re)?.stokes().with_gamma(0.0);
        let solver = Solver {
            problem: self.problem,
            opts: SolverOptions {
                outer: match self.opts.outer {
                    OuterPreconditioner::Simple => OuterPreconditioner::Simple,
                    _ => OuterPreconditioner::AugmentedLagrangian(BlockMode::Full),
                },
                ..self.opts
            },
        };
        let state = self.problem.initial_state();
        let mut report = StageReport {
            re,
            ..Default::default()
        };
        let out = solver.iterate(state, &params, Linearization::Newton, &mut report);
        out.map(|s| (s, report))
    }

    /// Newton (or Picard) iteration at Reynolds number `re` from `state`.
    /// On failure the partially filled report is returned with the error.
    #[allow(clippy::result_large_err)]
    pub fn solve(
        &self,
        state: DiscreteState,
        re: f64,
    ) -> Result<(DiscreteState, StageReport), (NonlinearError, StageReport)> {
        let mut report = StageReport {
            re,
            ..Default::default()
        };
        let params = match self.params(re) {
            Ok(p) => p,
            Err(e) => return Err((e, report)),
        };
        match self.iterate(state, &params, self.opts.linearization, &mut report) {
            Ok(s) => Ok((s, report)),
            Err(e) => {
                report.failure = Some(e.to_string());
                Err((e, report))
            }
        }
    }

    fn iterate(
        &self,
        mut state: DiscreteState,
        params: &PhysicalParams,
        lin: Linearization,
        report: &mut StageReport,
    ) -> Result<DiscreteState, NonlinearError> {
        let start = Instant::now();
        let cfg = self.opts.newton;
        let force = self.force(params.re);
        let force = force.as_ref();
        let disc = self.problem.finest();
        disc.apply_dirichlet(&mut state.u, &self.problem.dirichlet);
        let (mut f, mut fnorm) = self.residual(&state, params, force)?;
        let target = cfg.atol.max(cfg.rtol * fnorm);
        report.residuals.push(fnorm);
        log::info!("Re {}: initial residual {:e}", params.re, fnorm);
        let mut step = 0;
        let result = loop {
            if fnorm <= target {
                break Ok(());
            }
            if step >= cfg.max_iterations {
                break Err(NonlinearError::MaxIterations {
                    steps: step,
                    residual: fnorm,
                    target,
                });
            }
            step += 1;
            let (sys, sol) = self.linear_solve(&state, params, force, lin)?;
            let sol = match sol {
                Ok(s) => s,
                Err(source) => {
                    if let SaddleError::NotConverged { iterations, .. } = &source {
                        report.krylov_iterations.push(*iterations);
                    }
                    break Err(NonlinearError::Linear { step, source });
                }
            };
            report.krylov_iterations.push(sol.outcome.iterations);

            let trial = |lambda: f64| -> Result<(DiscreteState, Vec<f64>, f64), NonlinearError> {
                let mut s = state.clone();
                s.u.iter_mut().zip(&sol.du).for_each(|(x, d)| *x += lambda * d);
                s.p.iter_mut().zip(&sol.dp).for_each(|(x, d)| *x += lambda * d);
                if self.problem.enclosed {
                    project_mean(&sys.mp, &mut s.p);
                }
                let (r, n) = self.residual(&s, params, force)?;
                Ok((s, r, n))
            };
            let (full_state, full_f, full_norm) = trial(1.0)?;
            let accepted = match cfg.line_search {
                LineSearch::None => Some((1.0, full_state, full_f, full_norm)),
                LineSearch::L2 => {
                    // phi(l) = |F(x + l d)|^2 / 2 modelled by a quadratic through
                    // phi(0), phi'(0) and phi(1)
                    let d: Vec<f64> = sol.du.iter().chain(&sol.dp).copied().collect();
                    let mut jd = vec![0.0; d.len()];
                    crate::linalg::LinearOperator::apply(&SaddleOperator::new(&sys), &d, &mut jd);
                    let phi0 = 0.5 * fnorm * fnorm;
                    let dphi0 = crate::linalg::dot(&f, &jd);
                    let phi1 = 0.5 * full_norm * full_norm;
                    let curv = phi1 - phi0 - dphi0;
                    let lambda = if curv > 0.0 && dphi0 < 0.0 {
                        (-dphi0 / (2.0 * curv)).clamp(0.1, 1.0)
                    } else {
                        1.0
                    };
                    let mut best = (1.0, full_state, full_f, full_norm);
                    if lambda < 1.0 {
                        let (s, r, n) = trial(lambda)?;
                        if n < best.3 {
                            best = (lambda, s, r, n);
                        }
                    }
                    (best.3 < fnorm).then_some(best)
                }
            };
            let Some((lambda, s, r, n)) = accepted else {
                break Err(NonlinearError::LineSearch {
                    step,
                    residual: fnorm,
                    trial: full_norm,
                });
            };
            log::info!(
                "Re {}: step {step}: {} Krylov iterations, lambda {lambda}, residual {:e}",
                params.re,
                sol.outcome.iterations,
                n
            );
            state = s;
            f = r;
            fnorm = n;
            report.residuals.push(fnorm);
            report.step_lengths.push(lambda);
        };
        report.seconds = start.elapsed().as_secs_f64();
        report.converged = result.is_ok();
        result.map(|_| state)
    }

    /// Solve the stages in order, each from the previous solution; the first
    /// stage starts from the Stokes solution.
    pub fn continuation(&self, plan: &[f64]) -> ContinuationReport {
        let mut out = ContinuationReport::default();
        let Some(&first) = plan.first() else {
            return out;
        };
        let mut state = match self.stokes_initial_guess(first) {
            Ok((s, _)) => s,
            Err(e) => {
                out.stages.push(StageReport {
                    re: first,
                    failure: Some(format!("Stokes initial guess: {e}")),
                    ..Default::default()
                });
                return out;
            }
        };
        for &re in plan {
            match self.solve(state.clone(), re) {
                Ok((s, report)) => {
                    state = s;
                    out.stages.push(report);
                }
                Err((e, report)) => {
                    log::warn!("Re {re}: {e}");
                    out.stages.push(report);
                    break;
                }
            }
        }
        if out.stages.iter().any(|s| s.converged) {
            out.state = Some(state);
        }
        out
    }
}
