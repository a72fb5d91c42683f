//! Vertex-star patches and the additive star relaxation.

use std::sync::Arc;

use rayon::prelude::*;

use super::MultigridError;
use crate::assembly::Discretization;
use crate::linalg::{gmres, CsrMatrix, DenseLu, GmresConfig, LinearOperator, Preconditioner};

/// Dof index sets of the vertex patches; independent of the matrix values.
#[derive(Clone, Debug)]
pub struct PatchLayout {
    /// Vertex owning each patch, strictly increasing.
    pub vertices: Vec<usize>,
    /// Sorted global velocity dofs of each patch.
    pub dofs: Vec<Vec<usize>>,
}

impl PatchLayout {
    /// One patch per vertex: the free velocity dofs whose basis functions are
    /// supported inside the vertex star. Empty patches are dropped.
    pub fn new(disc: &Discretization) -> Self {
        let mesh = &disc.mesh;
        let map = &disc.velocity;
        let vs = map.value_size();
        let mut vertices = Vec::new();
        let mut dofs = Vec::new();
        let mut scalars = Vec::new();
        for v in 0..mesh.num_vertices() {
            let star = mesh.vertex_star(v).expect("vertex in range");
            scalars.clear();
            for &c in star {
                for &s in map.cell_dofs(c) {
                    let cells = map.entity_of(s).cells(mesh);
                    if cells.iter().all(|k| star.binary_search(k).is_ok()) {
                        scalars.push(s);
                    }
                }
            }
            scalars.sort_unstable();
            scalars.dedup();
            let patch: Vec<usize> = scalars
                .iter()
                .flat_map(|&s| (0..vs).map(move |k| s * vs + k))
                .filter(|&i| !disc.is_dirichlet(i))
                .collect();
            if !patch.is_empty() {
                vertices.push(v);
                dofs.push(patch);
            }
        }
        PatchLayout { vertices, dofs }
    }

    /// Build from explicit parts; patches are reordered by vertex id.
    pub fn from_parts(mut parts: Vec<(usize, Vec<usize>)>) -> Self {
        parts.sort_by_key(|p| p.0);
        let (vertices, dofs) = parts.into_iter().unzip();
        PatchLayout { vertices, dofs }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
}

/// Patches with factorized local matrices.
#[derive(Clone, Debug)]
pub struct PatchSet {
    pub layout: Arc<PatchLayout>,
    factors: Vec<DenseLu>,
    n: usize,
}

impl PatchSet {
    pub fn factorize(layout: Arc<PatchLayout>, a: &CsrMatrix) -> Result<Self, MultigridError> {
        let factors = layout
            .dofs
            .par_iter()
            .enumerate()
            .map(|(k, idx)| {
                DenseLu::factor(idx.len(), a.submatrix_dense(idx)).map_err(|e| MultigridError::SingularPatch {
                    vertex: layout.vertices[k],
                    source: e,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PatchSet {
            layout,
            factors,
            n: a.nrows(),
        })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Additive star correction: sum over patches of the local solves.
    pub fn apply_star(&self, r: &[f64], z: &mut [f64]) {
        let locals: Vec<Vec<f64>> = self
            .layout
            .dofs
            .par_iter()
            .zip(self.factors.par_iter())
            .with_min_len(32)
            .map(|(idx, lu)| {
                let mut x: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
                lu.solve_in_place(&mut x);
                x
            })
            .collect();
        z.iter_mut().for_each(|v| *v = 0.0);
        for (idx, x) in self.layout.dofs.iter().zip(&locals) {
            for (&i, &v) in idx.iter().zip(x) {
                z[i] += v;
            }
        }
    }
}

impl Preconditioner for PatchSet {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        debug_assert_eq!(r.len(), self.n);
        self.apply_star(r, z);
    }
}

/// `k` GMRES iterations on the defect equation, preconditioned by the star
/// relaxation, started from zero; the correction is added to `x`.
///
/// A breakdown of the inner GMRES (an exactly singular Hessenberg system) falls
/// back to a single additive star correction.
pub fn relax(a: &CsrMatrix, patches: &PatchSet, b: &[f64], x: &mut [f64], k: usize) {
    let n = a.dim();
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut e = vec![0.0; n];
    if gmres(a, patches, &r, &mut e, &GmresConfig::fixed(k), None).is_err() {
        log::warn!("relaxation GMRES broke down; using one star correction");
        patches.apply_star(&r, &mut e);
    }
    x.iter_mut().zip(&e).for_each(|(xi, ei)| *xi += ei);
}
