//! Geometric multigrid for the augmented velocity block: star-patch relaxation
//! wrapped in GMRES, kernel-aware prolongation and full multigrid cycling.

mod patches;
mod transfer;

use std::sync::Arc;

use thiserror::Error;

pub use patches::{relax, PatchLayout, PatchSet};
pub use transfer::{
    build_transfer, inject, Interpolation, TransferOperator, TransferOptions, BUBBLE_SCALING,
};

use crate::assembly::{AssemblyError, DiscreteState, Discretization, Linearization, PhysicalParams, VectorField};
use crate::fem::{Family, FemError};
use crate::linalg::{norm2, CsrMatrix, LinalgError, Preconditioner, SparseLu};

#[derive(Debug, Error)]
pub enum MultigridError {
    #[error("fine mesh carries no refinement genealogy")]
    MissingGenealogy,
    #[error("meshes of consecutive levels are not nested")]
    NotNested,
    #[error(
        "local correction is ill-posed for {family:?} in {dim}D: {vt} velocity dofs \
         interior to a coarse cell cannot satisfy {qt} independent divergence constraints"
    )]
    IllPosedCorrection {
        family: Family,
        dim: usize,
        vt: usize,
        qt: usize,
    },
    #[error("patch matrix around vertex {vertex} is singular")]
    SingularPatch {
        vertex: usize,
        #[source]
        source: LinalgError,
    },
    #[error("local correction matrix of coarse cell {cell} is singular")]
    SingularCorrection {
        cell: usize,
        #[source]
        source: LinalgError,
    },
    #[error("expected {expected} level operators, got {found}")]
    LevelCount { expected: usize, found: usize },
    #[error("coarse grid factorization failed")]
    Coarse(#[source] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cycle {
    /// Full multigrid: exact coarse solve, then prolongation and one V-cycle per level.
    Full,
    /// A single V-cycle on the finest level from a zero initial guess.
    V,
}

#[derive(Clone, Copy, Debug)]
pub struct MgConfig {
    /// GMRES iterations per relaxation sweep.
    pub relax_iterations: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub cycle: Cycle,
}

impl MgConfig {
    pub fn for_dim(dim: usize) -> Self {
        MgConfig {
            relax_iterations: if dim == 3 { 10 } else { 6 },
            pre_smooth: 1,
            post_smooth: 1,
            cycle: Cycle::Full,
        }
    }

    pub fn with_cycle(mut self, cycle: Cycle) -> Self {
        self.cycle = cycle;
        self
    }
}

/// Matrix-independent data of a level hierarchy, built once per mesh hierarchy.
#[derive(Clone)]
pub struct MultigridSetup {
    discs: Vec<Arc<Discretization>>,
    interps: Vec<Arc<Interpolation>>,
    layouts: Vec<Arc<PatchLayout>>,
}

impl MultigridSetup {
    /// `discs` ordered from coarsest to finest.
    pub fn new(discs: Vec<Arc<Discretization>>, opts: TransferOptions) -> Result<Self, MultigridError> {
        let interps = discs
            .windows(2)
            .map(|w| Interpolation::new(&w[0], &w[1], opts).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        let layouts = discs
            .iter()
            .skip(1)
            .map(|d| Arc::new(PatchLayout::new(d)))
            .collect();
        Ok(MultigridSetup {
            discs,
            interps,
            layouts,
        })
    }

    pub fn levels(&self) -> &[Arc<Discretization>] {
        &self.discs
    }

    pub fn finest(&self) -> &Arc<Discretization> {
        self.discs.last().expect("at least one level")
    }

    pub fn interpolation(&self, fine_level: usize) -> &Arc<Interpolation> {
        &self.interps[fine_level - 1]
    }

    /// Operators on all levels: the given finest matrix plus rediscretizations
    /// around the state injected level by level.
    pub fn rediscretize(
        &self,
        fine_a: CsrMatrix,
        fine_state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
        lin: Linearization,
    ) -> Result<Vec<CsrMatrix>, MultigridError> {
        let nl = self.discs.len();
        let mut mats = vec![fine_a];
        let mut state = fine_state.clone();
        for l in (0..nl - 1).rev() {
            state = inject(&self.discs[l], &self.discs[l + 1], &state)?;
            mats.push(self.discs[l].assemble_velocity_block(&state, params, force, lin)?);
        }
        mats.reverse();
        Ok(mats)
    }

    /// Factor patches, local corrections and the coarse problem for the given
    /// level operators (coarsest first).
    pub fn build(&self, mats: Vec<CsrMatrix>, config: MgConfig) -> Result<Multigrid, MultigridError> {
        if mats.len() != self.discs.len() {
            return Err(MultigridError::LevelCount {
                expected: self.discs.len(),
                found: mats.len(),
            });
        }
        let coarse = SparseLu::factor(&mats[0]).map_err(MultigridError::Coarse)?;
        let mut patches = Vec::with_capacity(mats.len() - 1);
        let mut transfers = Vec::with_capacity(mats.len() - 1);
        for l in 1..mats.len() {
            patches.push(PatchSet::factorize(self.layouts[l - 1].clone(), &mats[l])?);
            transfers.push(TransferOperator::new(self.interps[l - 1].clone(), &mats[l])?);
        }
        let dirichlet = self.discs.iter().map(|d| d.dirichlet_dofs().to_vec()).collect();
        Ok(Multigrid {
            mats,
            patches,
            transfers,
            coarse,
            dirichlet,
            config,
        })
    }
}

/// Multigrid approximation of the inverse of the finest-level operator.
pub struct Multigrid {
    mats: Vec<CsrMatrix>,
    /// Relaxation on levels 1.. (index l-1).
    patches: Vec<PatchSet>,
    /// Transfer from level l-1 to l (index l-1).
    transfers: Vec<TransferOperator>,
    coarse: SparseLu,
    dirichlet: Vec<Vec<usize>>,
    pub config: MgConfig,
}

impl Multigrid {
    pub fn num_levels(&self) -> usize {
        self.mats.len()
    }

    pub fn operator(&self, level: usize) -> &CsrMatrix {
        &self.mats[level]
    }

    pub fn transfer(&self, fine_level: usize) -> &TransferOperator {
        &self.transfers[fine_level - 1]
    }

    fn residual(&self, level: usize, b: &[f64], x: &[f64]) -> Vec<f64> {
        let mut r = self.mats[level].mul_vec(x);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        r
    }

    fn restrict_to(&self, level: usize, r: &[f64]) -> Vec<f64> {
        self.transfers[level].restrict(r)
    }

    fn prolong_to(&self, level: usize, xc: &[f64]) -> Vec<f64> {
        self.transfers[level - 1].prolong(&self.mats[level], xc)
    }

    /// One V-cycle on `level` improving `x` for right-hand side `b`.
    pub fn v_cycle(&self, level: usize, b: &[f64], x: &mut [f64]) {
        if level == 0 {
            x.copy_from_slice(&self.coarse.solve(b));
            return;
        }
        let a = &self.mats[level];
        let patches = &self.patches[level - 1];
        let k = self.config.relax_iterations;
        for _ in 0..self.config.pre_smooth {
            relax(a, patches, b, x, k);
        }
        let r = self.residual(level, b, x);
        let rc = self.restrict_to(level - 1, &r);
        let mut ec = vec![0.0; rc.len()];
        self.v_cycle(level - 1, &rc, &mut ec);
        let e = self.prolong_to(level, &ec);
        x.iter_mut().zip(&e).for_each(|(xi, ei)| *xi += ei);
        for _ in 0..self.config.post_smooth {
            relax(a, patches, b, x, k);
        }
    }

    /// Full multigrid cycle for `A x = b` on the finest level.
    pub fn full_cycle(&self, b: &[f64]) -> Vec<f64> {
        let top = self.mats.len() - 1;
        let mut rhs = vec![b.to_vec()];
        for l in (0..top).rev() {
            let r = self.restrict_to(l, rhs.last().unwrap());
            rhs.push(r);
        }
        rhs.reverse();
        let mut x = self.coarse.solve(&rhs[0]);
        for l in 1..=top {
            let mut xf = self.prolong_to(l, &x);
            for &i in &self.dirichlet[l] {
                xf[i] = rhs[l][i];
            }
            self.v_cycle(l, &rhs[l], &mut xf);
            if log::log_enabled!(log::Level::Debug) {
                let r = self.residual(l, &rhs[l], &xf);
                log::debug!(
                    "fmg level {l}: residual {:e} (rhs {:e})",
                    norm2(&r),
                    norm2(&rhs[l])
                );
            }
            x = xf;
        }
        x
    }

    /// Stationary iteration `x += M(b - A x)`; returns the residual norms
    /// before the first and after every step.
    pub fn iterate(&self, b: &[f64], x: &mut [f64], steps: usize) -> Vec<f64> {
        let top = self.mats.len() - 1;
        let mut r = self.residual(top, b, x);
        let mut hist = vec![norm2(&r)];
        let mut z = vec![0.0; x.len()];
        for _ in 0..steps {
            self.apply(&r, &mut z);
            x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
            r = self.residual(top, b, x);
            hist.push(norm2(&r));
        }
        hist
    }
}

impl Preconditioner for Multigrid {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self.config.cycle {
            Cycle::Full => z.copy_from_slice(&self.full_cycle(r)),
            Cycle::V => {
                let top = self.mats.len() - 1;
                z.iter_mut().for_each(|v| *v = 0.0);
                for &i in &self.dirichlet[top] {
                    z[i] = r[i];
                }
                self.v_cycle(top, r, z);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::GradDiv;
    use crate::fem::{EntityRef, QuadratureRule};
    use crate::linalg::dot;
    use crate::mesh::{build_structured_grid, MeshHierarchy, MeshLevel};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn walls(dim: usize) -> Vec<String> {
        let names = ["x_min", "x_max", "y_min", "y_max", "z_min", "z_max"];
        names[..2 * dim].iter().map(|s| s.to_string()).collect()
    }

    fn hierarchy(dim: usize, n: usize, refinements: usize, fam: Family) -> Vec<Arc<Discretization>> {
        let coarse = build_structured_grid(&vec![(0.0, 1.0); dim], &vec![n; dim], dim).unwrap();
        MeshHierarchy::uniform(coarse, refinements)
            .unwrap()
            .levels
            .into_iter()
            .map(|m| Arc::new(Discretization::new(m, fam, &walls(dim)).unwrap()))
            .collect()
    }

    fn no_scaling() -> TransferOptions {
        TransferOptions { bubble_scaling: false }
    }

    fn random_free(disc: &Discretization, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..disc.velocity.ndofs())
            .map(|i| if disc.is_dirichlet(i) { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect()
    }

    fn stokes_matrix(disc: &Discretization, gamma: f64) -> CsrMatrix {
        let params = PhysicalParams::new(1.0, gamma, 0.0, 1.0).unwrap().stokes().with_gamma(gamma);
        disc.assemble_velocity_block(&DiscreteState::zeros(disc), &params, None, Linearization::Newton)
            .unwrap()
    }

    #[test]
    fn center_patch_of_small_grid() {
        let levels = hierarchy(2, 2, 0, Family::P2);
        let d = &levels[0];
        let layout = PatchLayout::new(d);
        let center = (0..d.mesh.num_vertices())
            .find(|&v| {
                let x = d.mesh.vertex(v);
                (x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12
            })
            .unwrap();
        let k = layout.vertices.iter().position(|&v| v == center).unwrap();
        // the center vertex and its six spokes, two components each
        assert_eq!(layout.dofs[k].len(), 14);
        for patch in &layout.dofs {
            assert!(patch.iter().all(|&i| !d.is_dirichlet(i)));
            assert!(patch.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn enclosed_single_cell_has_no_patches() {
        let label = |_: &[usize]| Some("wall".to_string());
        let m = MeshLevel::from_cells(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 1, 2], &label).unwrap();
        let d = Discretization::new(m, Family::P2, &["wall".to_string()]).unwrap();
        assert!(PatchLayout::new(&d).is_empty());
    }

    #[test]
    fn patch_order_does_not_change_star_action() {
        let levels = hierarchy(2, 3, 0, Family::P2);
        let d = &levels[0];
        let a = stokes_matrix(d, 10.0);
        let layout = PatchLayout::new(d);
        let mut parts: Vec<(usize, Vec<usize>)> =
            layout.vertices.iter().cloned().zip(layout.dofs.iter().cloned()).collect();
        parts.reverse();
        let shuffled = PatchLayout::from_parts(parts);
        assert_eq!(shuffled.vertices, layout.vertices);
        let p1 = PatchSet::factorize(Arc::new(layout), &a).unwrap();
        let p2 = PatchSet::factorize(Arc::new(shuffled), &a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_free(d, &mut rng);
        let (mut z1, mut z2) = (vec![0.0; r.len()], vec![0.0; r.len()]);
        p1.apply_star(&r, &mut z1);
        p2.apply_star(&r, &mut z2);
        assert_eq!(z1, z2);
    }

    #[test]
    fn p2_interpolation_is_exact_for_nested_spaces() {
        let levels = hierarchy(2, 2, 1, Family::P2);
        let (c, f) = (&levels[0], &levels[1]);
        let interp = Interpolation::new(c, f, no_scaling()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let uc: Vec<f64> = (0..c.velocity.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let uf = interp.interpolate(&uc);
        let gen = f.mesh.genealogy().unwrap();
        for fc in 0..f.mesh.num_cells() {
            let k = gen.cell_parent[fc];
            for _ in 0..3 {
                let mut lam: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = lam.iter().sum();
                lam.iter_mut().for_each(|l| *l /= s);
                let x = f.mesh.from_barycentric(fc, &lam);
                let vf = f.eval_velocity(&uf, fc, &lam);
                let vc = c.eval_velocity(&uc, k, &c.mesh.barycentric(k, &x));
                for i in 0..2 {
                    assert!((vf[i] - vc[i]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn linear_fields_are_reproduced_with_bubbles() {
        let levels = hierarchy(3, 1, 1, Family::P1FB);
        let (c, f) = (&levels[0], &levels[1]);
        let field = |x: &[f64]| [1.0 + x[0] - 2.0 * x[2], 0.5 * x[1], x[0] + x[1] + x[2]];
        let uc = c.interpolate(&field);
        let uf = f.interpolate(&field);
        for opts in [no_scaling(), TransferOptions::default()] {
            let e = Interpolation::new(c, f, opts).unwrap().interpolate(&uc);
            for (p, q) in e.iter().zip(&uf) {
                assert!((p - q).abs() < 1e-13);
            }
        }
    }

    fn sorted_facet(coarse: &MeshLevel, cf: usize) -> Vec<usize> {
        let mut v = coarse.facet(cf).to_vec();
        v.sort_unstable();
        v
    }

    fn unit_normal(coarse: &MeshLevel, cf: usize) -> [f64; 3] {
        let cverts = sorted_facet(coarse, cf);
        let x0 = coarse.vertex(cverts[0]).to_vec();
        let e1: Vec<f64> = (0..3).map(|i| coarse.vertex(cverts[1])[i] - x0[i]).collect();
        let e2: Vec<f64> = (0..3).map(|i| coarse.vertex(cverts[2])[i] - x0[i]).collect();
        let n = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        [n[0] / nn, n[1] / nn, n[2] / nn]
    }

    /// Flux of a velocity through the coarse facet `cf`, integrated facet by
    /// facet on the mesh of `d`.
    fn flux(d: &Discretization, coarse: &MeshLevel, cf: usize, u: &[f64], on_fine: bool) -> f64 {
        let rule = QuadratureRule::facet(3, 4);
        let cverts = sorted_facet(coarse, cf);
        let n = unit_normal(coarse, cf);
        let facets: Vec<usize> = if on_fine {
            let gen = d.mesh.genealogy().unwrap();
            (0..d.mesh.num_facets())
                .filter(|&g| {
                    let car = gen.carrier(d.mesh.facet(g));
                    let mut cv = car.vertices().to_vec();
                    cv.sort_unstable();
                    cv == cverts
                })
                .collect()
        } else {
            vec![cf]
        };
        let mut total = 0.0;
        for g in facets {
            let verts = d.mesh.facet(g).to_vec();
            let cell = d.mesh.facet_cells(g)[0];
            let p0 = d.mesh.vertex(verts[0]).to_vec();
            let a: Vec<f64> = (0..3).map(|i| d.mesh.vertex(verts[1])[i] - p0[i]).collect();
            let b: Vec<f64> = (0..3).map(|i| d.mesh.vertex(verts[2])[i] - p0[i]).collect();
            let cr = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            let area = 0.5 * (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt();
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let mut x = [0.0; 3];
                for (k, &v) in verts.iter().enumerate() {
                    for i in 0..3 {
                        x[i] += p[k] * d.mesh.vertex(v)[i];
                    }
                }
                let lam = d.mesh.barycentric(cell, &x);
                let val = d.eval_velocity(u, cell, &lam);
                total += w * area * (val[0] * n[0] + val[1] * n[1] + val[2] * n[2]);
            }
        }
        total
    }

    #[test]
    fn bubble_flux_is_restored_by_scaling() {
        let levels = hierarchy(3, 1, 1, Family::P1FB);
        let (c, f) = (&levels[0], &levels[1]);
        for cf in [0, c.mesh.num_facets() / 2] {
            let s = c.velocity.entity_dofs(EntityRef::Facet(cf)).start;
            let mut uc = vec![0.0; c.velocity.ndofs()];
            let n = unit_normal(&c.mesh, cf);
            for k in 0..3 {
                uc[s * 3 + k] = n[k];
            }
            let coarse_flux = flux(c, &c.mesh, cf, &uc, false);
            assert!(coarse_flux.abs() > 1e-3);
            let unscaled = Interpolation::new(c, f, no_scaling()).unwrap().interpolate(&uc);
            let scaled = Interpolation::new(c, f, TransferOptions::default()).unwrap().interpolate(&uc);
            let r0 = flux(f, &c.mesh, cf, &unscaled, true) / coarse_flux;
            let r1 = flux(f, &c.mesh, cf, &scaled, true) / coarse_flux;
            assert!((r0 - 5.0 / 8.0).abs() < 1e-10, "unscaled ratio {r0}");
            assert!((r1 - 1.0).abs() < 1e-10, "scaled ratio {r1}");
        }
    }

    #[test]
    fn quadratic_velocity_in_3d_is_rejected() {
        let levels = hierarchy(3, 1, 1, Family::P2);
        match Interpolation::new(&levels[0], &levels[1], TransferOptions::default()) {
            Err(MultigridError::IllPosedCorrection { vt, qt, dim: 3, .. }) => {
                assert_eq!((vt, qt), (3, 7));
            }
            other => panic!("expected rejection, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn restriction_is_adjoint_of_unscaled_interpolation() {
        let levels = hierarchy(3, 1, 1, Family::P1FB);
        let (c, f) = (&levels[0], &levels[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let uc = random_free(c, &mut rng);
        let rf: Vec<f64> = (0..f.velocity.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let interp = Interpolation::new(c, f, no_scaling()).unwrap();
        let lhs = dot(&interp.interpolate(&uc), &rf);
        let rhs = dot(&uc, &interp.restrict(&rf));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        // with scaling the restriction keeps the natural (unscaled) weights
        let scaled = Interpolation::new(c, f, TransferOptions::default()).unwrap();
        assert_eq!(scaled.restrict(&rf), interp.restrict(&rf));
    }

    #[test]
    fn injection_recovers_coarse_functions() {
        let levels = hierarchy(2, 2, 1, Family::P2);
        let (c, f) = (&levels[0], &levels[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut sc = DiscreteState::zeros(c);
        sc.u.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        sc.p.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let interp = Interpolation::new(c, f, no_scaling()).unwrap();
        let gen = f.mesh.genealogy().unwrap();
        let sf = DiscreteState {
            u: interp.interpolate(&sc.u),
            p: (0..f.mesh.num_cells()).map(|k| sc.p[gen.cell_parent[k]]).collect(),
        };
        let back = inject(c, f, &sf).unwrap();
        for (p, q) in back.u.iter().zip(&sc.u) {
            assert!((p - q).abs() < 1e-12);
        }
        for (p, q) in back.p.iter().zip(&sc.p) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn correction_acts_only_inside_coarse_cells() {
        let levels = hierarchy(2, 2, 1, Family::P2);
        let (c, f) = (&levels[0], &levels[1]);
        let a = stokes_matrix(f, 100.0);
        let interp = Arc::new(Interpolation::new(c, f, no_scaling()).unwrap());
        let t = TransferOperator::new(interp.clone(), &a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let uc = random_free(c, &mut rng);
        let plain = interp.interpolate(&uc);
        let corrected = t.prolong(&a, &uc);
        let mut inside = vec![false; plain.len()];
        interp.interior.iter().flatten().for_each(|&i| inside[i] = true);
        let mut changed = 0;
        for i in 0..plain.len() {
            if f.is_dirichlet(i) {
                assert_eq!(corrected[i], 0.0);
            } else if !inside[i] {
                assert_eq!(corrected[i], plain[i]);
            } else if (corrected[i] - plain[i]).abs() > 1e-12 {
                changed += 1;
            }
        }
        assert!(changed > 0);
    }

    /// Random coarse velocity in the kernel of the coarse divergence.
    fn coarse_kernel_field(c: &Discretization, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u = random_free(c, rng);
        let b = c.divergence();
        let bd = DMatrix::from_row_slice(b.nrows(), b.ncols(), &b.to_dense());
        let bu = &bd * DVector::from_vec(u.clone());
        let bbt = &bd * bd.transpose();
        let y = bbt.pseudo_inverse(1e-12).unwrap() * bu;
        let proj = DVector::from_vec(u) - bd.transpose() * y;
        let out: Vec<f64> = proj.iter().cloned().collect();
        assert!(norm2(&b.mul_vec(&out)) < 1e-12);
        out
    }

    #[test]
    fn prolongation_keeps_divergence_free_fields_nearly_divergence_free() {
        let levels = hierarchy(2, 2, 1, Family::P2);
        let (c, f) = (&levels[0], &levels[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let uc = coarse_kernel_field(c, &mut rng);
        let interp = Arc::new(Interpolation::new(c, f, no_scaling()).unwrap());
        let plain = interp.interpolate(&uc);
        let bf = f.divergence();
        let before = norm2(&bf.mul_vec(&plain));
        assert!(before > 1e-6, "plain interpolation should leave fine divergence");
        let mut prev = f64::INFINITY;
        for gamma in [1e2, 1e4, 1e6] {
            let a = stokes_matrix(f, gamma);
            let z = TransferOperator::new(interp.clone(), &a).unwrap().prolong(&a, &uc);
            let after = norm2(&bf.mul_vec(&z)) / before;
            assert!(after < 10.0 / gamma, "gamma {gamma}: ratio {after}");
            assert!(after < prev);
            prev = after;
        }
    }

    #[test]
    fn full_multigrid_contracts_robustly_in_gamma() {
        let levels = hierarchy(2, 4, 2, Family::P2);
        let setup = MultigridSetup::new(levels.clone(), TransferOptions::default()).unwrap();
        let f = setup.finest().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random_free(&f, &mut rng);
        let mut rates = Vec::new();
        for gamma in [1e2, 1e4] {
            let params = PhysicalParams::new(1.0, gamma, 0.0, 1.0).unwrap();
            let params = PhysicalParams { grad_div: GradDiv::Projected, ..params.stokes().with_gamma(gamma) };
            let state = DiscreteState::zeros(&f);
            let a = f.assemble_velocity_block(&state, &params, None, Linearization::Newton).unwrap();
            let mats = setup.rediscretize(a, &state, &params, None, Linearization::Newton).unwrap();
            let mg = setup.build(mats, MgConfig::for_dim(2)).unwrap();
            let mut x = vec![0.0; b.len()];
            let hist = mg.iterate(&b, &mut x, 3);
            let rate = (hist[3] / hist[0]).powf(1.0 / 3.0);
            assert!(rate < 0.1, "gamma {gamma}: rate {rate}");
            rates.push(rate);
        }
        assert!(rates[0] / rates[1] < 2.0 && rates[1] / rates[0] < 2.0, "{rates:?}");
    }
}
