use std::path::PathBuf;
use std::process::ExitCode;

use alns::assembly::Linearization;
use alns::bench::{self, Benchmark, ProblemConfig, RunConfig};
use alns::fem::Family;
use alns::nonlinear::OuterPreconditioner;
use alns::saddle::BlockMode;
use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LinearizationArg {
    Newton,
    Picard,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ElementArg {
    P1fb,
    P2fb,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PreconditionerArg {
    /// Augmented Lagrangian block factorization with full multigrid.
    Al,
    /// SIMPLE without augmentation.
    Simple,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Full,
    Diagonal,
    Lower,
    Upper,
}

/// Run a stationary Navier-Stokes benchmark and write CSV reports.
#[derive(Parser, Debug)]
#[command(name = "solver", version)]
struct Args {
    /// ldc2d, ldc3d, bfs2d, bfs3d or mms3d
    benchmark: String,
    /// Uniform refinements of the coarse mesh.
    #[arg(long, default_value_t = 1)]
    refinements: usize,
    /// Largest Reynolds number of the continuation.
    #[arg(long)]
    re_max: Option<f64>,
    /// Solve at this single Reynolds number instead of the continuation ladder.
    #[arg(long)]
    re: Option<f64>,
    /// Grad-div parameter; repeat to run several values.
    #[arg(long = "gamma")]
    gammas: Vec<f64>,
    /// SUPG scaling (defaults: 1 in 2D, 1/20 in 3D).
    #[arg(long)]
    delta_d: Option<f64>,
    #[arg(long, value_enum, default_value_t = LinearizationArg::Newton)]
    linearization: LinearizationArg,
    /// Disable the 8/5 scaling of prolonged facet bubbles.
    #[arg(long)]
    no_bubble_scaling: bool,
    /// Velocity element for 3D benchmarks.
    #[arg(long, value_enum, default_value_t = ElementArg::P1fb)]
    element: ElementArg,
    /// Coarse mesh file replacing the generated coarse grid.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Coarse grid resolution of the generated mesh.
    #[arg(long)]
    coarse: Option<usize>,
    /// Manufactured-solution runs use refinements 1..=levels.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, value_enum, default_value_t = PreconditionerArg::Al)]
    preconditioner: PreconditionerArg,
    /// Block factorization variant of the augmented Lagrangian preconditioner.
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    /// Cap on outer Krylov iterations per linear solve.
    #[arg(long)]
    max_krylov: Option<usize>,
    /// Output directory for the CSV reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for reproducibility records; the solver has no random components.
    #[arg(long)]
    seed: Option<u64>,
}

fn config(args: &Args) -> Result<RunConfig> {
    let benchmark: Benchmark = args.benchmark.parse()?;
    let mut problem = ProblemConfig::new(benchmark, args.refinements);
    problem.element = match args.element {
        ElementArg::P1fb => Family::P1FB,
        ElementArg::P2fb => Family::P2FB,
    };
    problem.bubble_scaling = !args.no_bubble_scaling;
    problem.mesh_file = args.mesh.clone();
    if let Some(n) = args.coarse {
        if n == 0 {
            bail!("--coarse must be positive");
        }
        problem.coarse = n;
    }
    let mut cfg = RunConfig::new(problem);
    if let Some(r) = args.re_max {
        cfg.re_max = r;
    }
    cfg.re = args.re;
    if !args.gammas.is_empty() {
        cfg.gammas = args.gammas.clone();
    }
    cfg.delta_d = args.delta_d;
    cfg.linearization = match args.linearization {
        LinearizationArg::Newton => Linearization::Newton,
        LinearizationArg::Picard => Linearization::Picard,
    };
    cfg.outer = match args.preconditioner {
        PreconditionerArg::Simple => OuterPreconditioner::Simple,
        PreconditionerArg::Al => OuterPreconditioner::AugmentedLagrangian(match args.mode {
            ModeArg::Full => BlockMode::Full,
            ModeArg::Diagonal => BlockMode::Diagonal,
            ModeArg::Lower => BlockMode::Lower,
            ModeArg::Upper => BlockMode::Upper,
        }),
    };
    cfg.mms_levels = args.levels;
    cfg.max_krylov = args.max_krylov;
    if cfg.plan().is_empty() {
        bail!("no continuation stage at or below Re = {}", cfg.re_max);
    }
    Ok(cfg)
}

fn run(args: Args) -> Result<bool> {
    let cfg = config(&args)?;
    if let Some(seed) = args.seed {
        log::info!("seed {seed} (deterministic solver, recorded only)");
    }
    let outcome = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .context("creating thread pool")?
            .install(|| bench::run(&cfg))?,
        None => bench::run(&cfg)?,
    };
    bench::write_reports(&outcome, &args.out)
        .with_context(|| format!("writing reports to {}", args.out.display()))?;
    for run in &outcome.runs {
        for s in &run.report.stages {
            println!(
                "{} gamma={:e} Re={:e}: {} Newton steps, {:.2} outer iterations per step{}",
                run.benchmark,
                run.gamma,
                s.re,
                s.newton_steps(),
                s.average_krylov(),
                if s.converged { "" } else { " (FAILED)" }
            );
        }
    }
    for r in &outcome.mms {
        println!(
            "h={:e} gamma={:e}: |v-v_h|={:e} |p-p_h|={:e}",
            r.h, r.gamma, r.velocity_error, r.pressure_error
        );
    }
    Ok(outcome.converged())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("not all stages converged");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
