//! Grid transfer: interpolation with facet-bubble flux scaling, local
//! coarse-cell correction of prolonged fields, restriction and injection.

use std::sync::Arc;

use rayon::prelude::*;

use super::MultigridError;
use crate::assembly::{DiscreteState, Discretization};
use crate::fem::{EntityRef, Family};
use crate::linalg::{CsrMatrix, DenseLu, SparsityBuilder};

/// Scaling of fine facet-bubble coefficients that restores coarse facet fluxes
/// for the linear-plus-bubble element: a coarse bubble's unscaled interpolant
/// carries 5/8 of its flux.
pub const BUBBLE_SCALING: f64 = 8.0 / 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransferOptions {
    pub bubble_scaling: bool,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            bubble_scaling: true,
        }
    }
}

/// Matrix-independent part of the transfer between two consecutive levels.
#[derive(Clone, Debug)]
pub struct Interpolation {
    /// Scaled interpolation, fine x coarse (vector dofs).
    pub e: CsrMatrix,
    /// Transpose of the unscaled interpolation, coarse x fine.
    pub et: CsrMatrix,
    /// Fine dofs interior to each coarse cell (the local correction spaces).
    pub interior: Vec<Vec<usize>>,
    /// Per-row scale factors applied to the natural interpolation.
    pub row_scale: Vec<f64>,
    fine_dirichlet: Vec<usize>,
    coarse_dirichlet: Vec<usize>,
}

impl Interpolation {
    pub fn new(
        coarse: &Discretization,
        fine: &Discretization,
        opts: TransferOptions,
    ) -> Result<Self, MultigridError> {
        let gen = fine.mesh.genealogy().ok_or(MultigridError::MissingGenealogy)?;
        let dim = fine.dim();
        let family = fine.velocity.spec.family;
        if gen.coarse_vertices != coarse.mesh.num_vertices()
            || gen.cell_parent.len() != fine.mesh.num_cells()
        {
            return Err(MultigridError::NotNested);
        }

        // local correction spaces and their well-posedness
        let nchild = gen.children_per_cell;
        let mut interior = Vec::with_capacity(coarse.mesh.num_cells());
        for k in 0..coarse.mesh.num_cells() {
            let vt = fine.velocity.interior_dofs_of_coarse_cell(&fine.mesh, k)?;
            let qt = nchild - 1;
            if vt.len() < qt {
                return Err(MultigridError::IllPosedCorrection {
                    family,
                    dim,
                    vt: vt.len(),
                    qt,
                });
            }
            interior.push(vt);
        }

        // scalar interpolation by applying fine dof functionals to coarse basis functions
        let nfs = fine.velocity.num_scalar();
        let ncs = coarse.velocity.num_scalar();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nfs];
        let mut visited = vec![false; nfs];
        let fel = &fine.velocity.element;
        let cel = &coarse.velocity.element;
        for k in 0..coarse.mesh.num_cells() {
            let cdofs = coarse.velocity.cell_dofs(k);
            for child in gen.children(k) {
                for (i, &s) in fine.velocity.cell_dofs(child).iter().enumerate() {
                    if visited[s] {
                        continue;
                    }
                    visited[s] = true;
                    let mut vals = vec![0.0; cdofs.len()];
                    for (p, w) in &fel.functionals[i] {
                        let x = fine.mesh.from_barycentric(child, &p[..=dim]);
                        let lam = coarse.mesh.barycentric(k, &x);
                        let mut l4 = [0.0; 4];
                        l4[..=dim].copy_from_slice(&lam);
                        for (v, phi) in vals.iter_mut().zip(cel.values(&l4)) {
                            *v += w * phi;
                        }
                    }
                    rows[s] = cdofs
                        .iter()
                        .zip(vals)
                        .filter(|(_, v)| v.abs() > 1e-14)
                        .map(|(&j, v)| (j, v))
                        .collect();
                }
            }
        }

        let scale_bubbles = opts.bubble_scaling && family == Family::P1FB;
        let row_scale: Vec<f64> = (0..nfs)
            .map(|s| {
                if scale_bubbles && matches!(fine.velocity.entity_of(s), EntityRef::Facet(_)) {
                    BUBBLE_SCALING
                } else {
                    1.0
                }
            })
            .collect();

        let mut sb = SparsityBuilder::new(nfs * dim, ncs * dim);
        for (s, row) in rows.iter().enumerate() {
            for &(j, _) in row {
                for c in 0..dim {
                    sb.add(s * dim + c, j * dim + c);
                }
            }
        }
        let mut e_unscaled = sb.build();
        for (s, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                for c in 0..dim {
                    e_unscaled.add_to(s * dim + c, j * dim + c, v);
                }
            }
        }
        let et = e_unscaled.transpose();
        let mut e = e_unscaled;
        for i in 0..e.nrows() {
            let f = row_scale[i / dim];
            if f != 1.0 {
                let (_, v) = e.row_mut(i);
                v.iter_mut().for_each(|x| *x *= f);
            }
        }
        Ok(Interpolation {
            e,
            et,
            interior,
            row_scale,
            fine_dirichlet: fine.dirichlet_dofs().to_vec(),
            coarse_dirichlet: coarse.dirichlet_dofs().to_vec(),
        })
    }

    pub fn fine_dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn coarse_dim(&self) -> usize {
        self.e.ncols()
    }

    /// Scaled interpolation without the local correction.
    pub fn interpolate(&self, uc: &[f64]) -> Vec<f64> {
        self.e.mul_vec(uc)
    }

    /// Transpose of the unscaled interpolation, with coarse Dirichlet entries zeroed.
    pub fn restrict(&self, rf: &[f64]) -> Vec<f64> {
        let mut rc = self.et.mul_vec(rf);
        for &i in &self.coarse_dirichlet {
            rc[i] = 0.0;
        }
        rc
    }
}

/// Interpolation together with the factorized local correction problems.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    pub interp: Arc<Interpolation>,
    blocks: Vec<DenseLu>,
}

impl TransferOperator {
    /// Factor `A_TT` on the fine dofs interior to every coarse cell.
    pub fn new(interp: Arc<Interpolation>, a_fine: &CsrMatrix) -> Result<Self, MultigridError> {
        let blocks = interp
            .interior
            .par_iter()
            .enumerate()
            .map(|(k, idx)| {
                DenseLu::factor(idx.len(), a_fine.submatrix_dense(idx))
                    .map_err(|e| MultigridError::SingularCorrection { cell: k, source: e })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TransferOperator { interp, blocks })
    }

    /// `E u_H - w_T`, where on each coarse cell `w_T` solves
    /// `a(w_T, v_T) = a(E u_H, v_T)` for all interior fine functions `v_T`.
    /// Fine Dirichlet entries are zero on return.
    pub fn prolong(&self, a_fine: &CsrMatrix, uc: &[f64]) -> Vec<f64> {
        let mut z = self.interp.interpolate(uc);
        for &i in &self.interp.fine_dirichlet {
            z[i] = 0.0;
        }
        let az = a_fine.mul_vec(&z);
        let corrections: Vec<Vec<f64>> = self
            .interp
            .interior
            .par_iter()
            .zip(self.blocks.par_iter())
            .with_min_len(32)
            .map(|(idx, lu)| {
                let mut w: Vec<f64> = idx.iter().map(|&i| az[i]).collect();
                lu.solve_in_place(&mut w);
                w
            })
            .collect();
        for (idx, w) in self.interp.interior.iter().zip(&corrections) {
            for (&i, &v) in idx.iter().zip(w) {
                z[i] -= v;
            }
        }
        z
    }

    pub fn restrict(&self, rf: &[f64]) -> Vec<f64> {
        self.interp.restrict(rf)
    }
}

/// Transfer between two levels for the matrix `a_fine` of the finer one.
pub fn build_transfer(
    coarse: &Discretization,
    fine: &Discretization,
    a_fine: &CsrMatrix,
    opts: TransferOptions,
) -> Result<TransferOperator, MultigridError> {
    let interp = Arc::new(Interpolation::new(coarse, fine, opts)?);
    TransferOperator::new(interp, a_fine)
}

/// Represent a fine velocity field on the coarse level by applying the coarse
/// dof functionals to it; pressures are averaged over the children.
pub fn inject(
    coarse: &Discretization,
    fine: &Discretization,
    state: &DiscreteState,
) -> Result<DiscreteState, MultigridError> {
    let gen = fine.mesh.genealogy().ok_or(MultigridError::MissingGenealogy)?;
    let dim = fine.dim();
    let mut out = DiscreteState::zeros(coarse);
    let ncs = coarse.velocity.num_scalar();
    let mut visited = vec![false; ncs];
    let cel = &coarse.velocity.element;
    for k in 0..coarse.mesh.num_cells() {
        let children: Vec<usize> = gen.children(k).collect();
        for (i, &s) in coarse.velocity.cell_dofs(k).iter().enumerate() {
            if visited[s] {
                continue;
            }
            visited[s] = true;
            let mut acc = [0.0; 3];
            for (p, w) in &cel.functionals[i] {
                let x = coarse.mesh.from_barycentric(k, &p[..=dim]);
                let (child, lam) = locate(fine, &children, &x);
                let v = fine.eval_velocity(&state.u, child, &lam);
                for c in 0..dim {
                    acc[c] += w * v[c];
                }
            }
            for c in 0..dim {
                out.u[s * dim + c] = acc[c];
            }
        }
        let mut vol = 0.0;
        let mut sum = 0.0;
        for &ch in &children {
            let v = fine.geometry[ch].volume;
            vol += v;
            sum += v * state.p[ch];
        }
        out.p[k] = sum / vol;
    }
    Ok(out)
}

/// Child cell containing `x` and the barycentric coordinates there.
fn locate(fine: &Discretization, children: &[usize], x: &[f64]) -> (usize, Vec<f64>) {
    let mut best = (children[0], fine.mesh.barycentric(children[0], x), f64::NEG_INFINITY);
    for &c in children {
        let lam = fine.mesh.barycentric(c, x);
        let worst = lam.iter().cloned().fold(f64::INFINITY, f64::min);
        if worst > best.2 {
            best = (c, lam, worst);
        }
        if worst >= -1e-12 {
            break;
        }
    }
    let mut lam = best.1;
    // clip round-off so the point lies in the closed simplex
    lam.iter_mut().for_each(|l| *l = l.max(0.0));
    let s: f64 = lam.iter().sum();
    lam.iter_mut().for_each(|l| *l /= s);
    (best.0, lam)
}
