//! Benchmark geometries, boundary data and problem assembly.

use std::path::Path;
use std::sync::Arc;

use super::mms::{mms_viscosity, MmsSolution};
use super::BenchError;
use crate::assembly::{Discretization, VectorField};
use crate::fem::Family;
use crate::mesh::{load_mesh, structured_connectivity, MeshHierarchy, MeshLevel};
use crate::multigrid::{MultigridSetup, TransferOptions};
use crate::nonlinear::{FlowProblem, ForceFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Benchmark {
    Ldc2d,
    Ldc3d,
    Bfs2d,
    Bfs3d,
    Mms3d,
}

impl Benchmark {
    pub fn dim(self) -> usize {
        match self {
            Benchmark::Ldc2d | Benchmark::Bfs2d => 2,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Ldc2d => "ldc2d",
            Benchmark::Ldc3d => "ldc3d",
            Benchmark::Bfs2d => "bfs2d",
            Benchmark::Bfs3d => "bfs3d",
            Benchmark::Mms3d => "mms3d",
        }
    }

    /// Default coarse resolution: cells per axis for the box domains, cells per
    /// unit length for the step.
    pub fn default_coarse(self) -> usize {
        match self {
            Benchmark::Ldc2d => 16,
            Benchmark::Ldc3d => 4,
            Benchmark::Bfs2d => 4,
            Benchmark::Bfs3d => 2,
            Benchmark::Mms3d => 2,
        }
    }

    pub fn enclosed(self) -> bool {
        !matches!(self, Benchmark::Bfs2d | Benchmark::Bfs3d)
    }

    /// `nu = scale / Re`: cavity-type domains have side length 2, the step has
    /// inlet height 1.
    pub fn viscosity_scale(self) -> f64 {
        match self {
            Benchmark::Bfs2d | Benchmark::Bfs3d => 1.0,
            _ => mms_viscosity(1.0),
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ldc2d" => Benchmark::Ldc2d,
            "ldc3d" => Benchmark::Ldc3d,
            "bfs2d" => Benchmark::Bfs2d,
            "bfs3d" => Benchmark::Bfs3d,
            "mms3d" => Benchmark::Mms3d,
            _ => return Err(BenchError::UnknownBenchmark(s.to_string())),
        })
    }
}

const BOX_FACES: [&str; 6] = ["x_min", "x_max", "y_min", "y_max", "z_min", "z_max"];

fn box_walls(dim: usize) -> Vec<String> {
    BOX_FACES[..2 * dim].iter().map(|s| s.to_string()).collect()
}

/// Regularized lid of the 2D cavity, vanishing at the corners.
pub fn lid_2d(x: &[f64]) -> [f64; 3] {
    let s = x[0] - 1.0;
    [1.0 - s.powi(4), 0.0, 0.0]
}

pub fn lid_3d(x: &[f64]) -> [f64; 3] {
    let (a, c) = (x[0], x[2]);
    [a * a * (2.0 - a) * (2.0 - a) * c * c * (2.0 - c) * (2.0 - c), 0.0, 0.0]
}

pub fn inflow_2d(x: &[f64]) -> [f64; 3] {
    [4.0 * (2.0 - x[1]) * (x[1] - 1.0), 0.0, 0.0]
}

pub fn inflow_3d(x: &[f64]) -> [f64; 3] {
    [4.0 * (2.0 - x[1]) * (x[1] - 1.0) * x[2] * (1.0 - x[2]), 0.0, 0.0]
}

fn zero(_: &[f64]) -> [f64; 3] {
    [0.0; 3]
}

/// Backward-facing step `([0,10]×[1,2]) ∪ ([1,10]×[0,1])` (times `[0,1]` in 3D)
/// meshed as a structured grid with `n` cells per unit length and the corner
/// block removed. Markers: `inflow` (x = 0), `outflow` (x = 10), `wall`.
pub fn bfs_mesh(dim: usize, n: usize) -> Result<MeshLevel, BenchError> {
    let mut extent = vec![(0.0, 10.0), (0.0, 2.0)];
    let mut subdiv = vec![10 * n, 2 * n];
    if dim == 3 {
        extent.push((0.0, 1.0));
        subdiv.push(n);
    }
    let (coords, cells) = structured_connectivity(&extent, &subdiv, dim)?;
    let npc = dim + 1;
    let in_step = |c: &[usize]| {
        let mut cen = [0.0; 3];
        for &v in c {
            for k in 0..dim {
                cen[k] += coords[v * dim + k] / npc as f64;
            }
        }
        cen[0] < 1.0 && cen[1] < 1.0
    };
    let kept: Vec<usize> = cells
        .chunks(npc)
        .filter(|c| !in_step(c))
        .flatten()
        .copied()
        .collect();
    // compact the vertex numbering
    let nv = coords.len() / dim;
    let mut new_id = vec![usize::MAX; nv];
    let mut new_coords = Vec::new();
    let mut next = 0;
    let mut new_cells = Vec::with_capacity(kept.len());
    for &v in &kept {
        if new_id[v] == usize::MAX {
            new_id[v] = next;
            next += 1;
            new_coords.extend_from_slice(&coords[v * dim..(v + 1) * dim]);
        }
        new_cells.push(new_id[v]);
    }
    let c2 = new_coords.clone();
    let label = move |verts: &[usize]| {
        let on = |axis: usize, val: f64| verts.iter().all(|&v| (c2[v * dim + axis] - val).abs() < 1e-12);
        if on(0, 0.0) {
            Some("inflow".to_string())
        } else if on(0, 10.0) {
            Some("outflow".to_string())
        } else {
            Some("wall".to_string())
        }
    };
    Ok(MeshLevel::from_cells(dim, new_coords, new_cells, &label)?)
}

/// Knobs shared by all benchmarks.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub benchmark: Benchmark,
    /// Coarse grid resolution (see [`Benchmark::default_coarse`]).
    pub coarse: usize,
    pub refinements: usize,
    /// Velocity element family for 3D runs (2D always uses P2).
    pub element: Family,
    pub bubble_scaling: bool,
    /// Coarse mesh file overriding the generated one.
    pub mesh_file: Option<std::path::PathBuf>,
}

impl ProblemConfig {
    pub fn new(benchmark: Benchmark, refinements: usize) -> Self {
        ProblemConfig {
            benchmark,
            coarse: benchmark.default_coarse(),
            refinements,
            element: Family::P1FB,
            bubble_scaling: true,
            mesh_file: None,
        }
    }

    pub fn family(&self) -> Family {
        if self.benchmark.dim() == 2 {
            Family::P2
        } else {
            self.element
        }
    }
}

pub fn coarse_mesh(cfg: &ProblemConfig) -> Result<MeshLevel, BenchError> {
    if let Some(path) = &cfg.mesh_file {
        return load_coarse(path);
    }
    let n = cfg.coarse;
    let b = cfg.benchmark;
    let dim = b.dim();
    Ok(match b {
        Benchmark::Ldc2d | Benchmark::Ldc3d | Benchmark::Mms3d => {
            crate::mesh::build_structured_grid(&vec![(0.0, 2.0); dim], &vec![n; dim], dim)?
        }
        Benchmark::Bfs2d | Benchmark::Bfs3d => bfs_mesh(dim, n)?,
    })
}

fn load_coarse(path: &Path) -> Result<MeshLevel, BenchError> {
    if !path.exists() {
        return Err(BenchError::MissingMesh(path.to_path_buf()));
    }
    Ok(load_mesh(path)?)
}

/// Boundary data and markers of a benchmark.
fn boundary_data(b: Benchmark) -> Vec<(String, VectorField)> {
    let f = |name: &str, g: VectorField| (name.to_string(), g);
    match b {
        Benchmark::Ldc2d => {
            let mut v: Vec<_> = ["x_min", "x_max", "y_min"]
                .iter()
                .map(|m| f(m, Arc::new(zero) as VectorField))
                .collect();
            v.push(f("y_max", Arc::new(lid_2d)));
            v
        }
        Benchmark::Ldc3d => {
            let mut v: Vec<_> = ["x_min", "x_max", "y_min", "z_min", "z_max"]
                .iter()
                .map(|m| f(m, Arc::new(zero) as VectorField))
                .collect();
            v.push(f("y_max", Arc::new(lid_3d)));
            v
        }
        Benchmark::Bfs2d => vec![f("wall", Arc::new(zero)), f("inflow", Arc::new(inflow_2d))],
        Benchmark::Bfs3d => vec![f("wall", Arc::new(zero)), f("inflow", Arc::new(inflow_3d))],
        Benchmark::Mms3d => {
            // the manufactured velocity does not depend on Re
            let exact = MmsSolution::new(1.0).velocity_field();
            box_walls(3).into_iter().map(|m| (m, exact.clone())).collect()
        }
    }
}

/// Build the discretized problem on the refinement hierarchy.
pub fn build_problem(cfg: &ProblemConfig) -> Result<FlowProblem, BenchError> {
    let b = cfg.benchmark;
    let coarse = coarse_mesh(cfg)?;
    if coarse.dim() != b.dim() {
        return Err(BenchError::Config(format!(
            "{} needs a {}D mesh, got {}D",
            b.name(),
            b.dim(),
            coarse.dim()
        )));
    }
    let hierarchy = MeshHierarchy::uniform(coarse, cfg.refinements)?;
    let dirichlet = boundary_data(b);
    let markers: Vec<String> = dirichlet.iter().map(|(m, _)| m.clone()).collect();
    let family = cfg.family();
    let discs = hierarchy
        .levels
        .into_iter()
        .map(|m| Discretization::new(m, family, &markers).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?;
    let setup = MultigridSetup::new(
        discs,
        TransferOptions {
            bubble_scaling: cfg.bubble_scaling,
        },
    )?;
    let force: Option<ForceFamily> = match b {
        Benchmark::Mms3d => Some(Arc::new(|re: f64| MmsSolution::new(re).force_field())),
        _ => None,
    };
    Ok(FlowProblem {
        name: b.name().to_string(),
        setup,
        dirichlet,
        force,
        enclosed: b.enclosed(),
        viscosity_scale: b.viscosity_scale(),
    })
}
