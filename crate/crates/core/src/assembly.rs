//! Residual and Jacobian assembly for the stabilized, grad-div augmented
//! Navier–Stokes discretization with piecewise-constant pressure.
//!
//! The momentum residual tested with `phi_a e_c` is
//!
//! ```text
//! nu (grad u + grad u^T, grad v) + ((u.grad)u, v) + delta(u) (L(u), u.grad v)
//!   + gamma (P0 div u, div v) - (p, div v) - (f, v)
//! ```
//!
//! with strong residual `L(u) = -nu (lap u + grad div u) + (u.grad)u - f` and
//! `delta(u) = delta_d (4|u|^2/h^2 + 144 nu^2/h^4)^(-1/2)` evaluated pointwise.
//! The continuity residual on cell K is `-int_K div u`.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{
    form_degree, CellGeometry, DofMap, ElementSpec, FemError, Family, QuadratureRule,
    Tabulation,
};
use crate::linalg::{CsrMatrix, SparsityBuilder};
use crate::mesh::MeshLevel;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("state length {found} does not match {what} space dimension {expected}")]
    Mismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("boundary marker `{0}` does not exist on the mesh")]
    UnknownMarker(String),
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// A vector field on the physical domain (unused trailing components are ignored).
pub type VectorField = Arc<dyn Fn(&[f64]) -> [f64; 3] + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Linearization {
    Newton,
    Picard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradDiv {
    /// gamma (P0 div u, div v): leaves the discrete solution unchanged.
    Projected,
    /// gamma (div u, div v): experimental, changes the discrete solution.
    Continuous,
}

#[derive(Clone, Copy, Debug)]
pub struct PhysicalParams {
    pub nu: f64,
    pub gamma: f64,
    pub delta_d: f64,
    /// Reynolds number, for reporting only.
    pub re: f64,
    /// Convective term (and with it SUPG) switched on.
    pub advection: bool,
    pub grad_div: GradDiv,
}

impl PhysicalParams {
    pub fn new(nu: f64, gamma: f64, delta_d: f64, re: f64) -> Result<Self, AssemblyError> {
        if !(nu > 0.0) || !(gamma >= 0.0) || !(delta_d >= 0.0) {
            return Err(AssemblyError::Params(format!(
                "need nu > 0, gamma >= 0, delta_d >= 0 (got {nu}, {gamma}, {delta_d})"
            )));
        }
        Ok(PhysicalParams {
            nu,
            gamma,
            delta_d,
            re,
            advection: true,
            grad_div: GradDiv::Projected,
        })
    }

    /// Same parameters with the convective and stabilization terms removed.
    pub fn stokes(&self) -> Self {
        PhysicalParams {
            advection: false,
            ..*self
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        PhysicalParams { gamma, ..*self }
    }
}

/// SUPG weight `delta_d (4 |u|^2 / h^2 + 144 nu^2 / h^4)^(-1/2)`.
pub fn supg_delta(u_norm: f64, h: f64, nu: f64, delta_d: f64) -> f64 {
    let s = 4.0 * u_norm * u_norm / (h * h) + 144.0 * nu * nu / (h * h * h * h);
    delta_d / s.sqrt()
}

/// Velocity and pressure coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

impl DiscreteState {
    pub fn zeros(disc: &Discretization) -> Self {
        DiscreteState {
            u: vec![0.0; disc.velocity.ndofs()],
            p: vec![0.0; disc.pressure.ndofs()],
        }
    }
}

/// Assembled linearized saddle-point system at one state.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    /// Velocity block including the grad-div augmentation.
    pub a: CsrMatrix,
    /// Divergence block (rows: cells).
    pub b: CsrMatrix,
    pub bt: CsrMatrix,
    /// Diagonal of the P0 pressure mass matrix (cell volumes).
    pub mp: Vec<f64>,
    /// Momentum residual (zero on Dirichlet rows).
    pub rhs_u: Vec<f64>,
    /// Continuity residual.
    pub rhs_p: Vec<f64>,
    pub dirichlet: Vec<usize>,
}

/// Spaces, geometry and sparsity of one mesh level.
pub struct Discretization {
    pub mesh: MeshLevel,
    pub velocity: DofMap,
    pub pressure: DofMap,
    pub geometry: Vec<CellGeometry>,
    pub rule: QuadratureRule,
    pub tab: Tabulation,
    pattern: CsrMatrix,
    b: CsrMatrix,
    bt: CsrMatrix,
    dirichlet: Vec<usize>,
    dirichlet_mask: Vec<bool>,
    dirichlet_markers: Vec<String>,
}

impl Discretization {
    /// Velocity space `family`^d with P0 pressure; homogeneous-structure Dirichlet
    /// conditions on every facet carrying one of `dirichlet_markers`.
    pub fn new(
        mesh: MeshLevel,
        family: Family,
        dirichlet_markers: &[String],
    ) -> Result<Self, AssemblyError> {
        let dim = mesh.dim();
        for m in dirichlet_markers {
            if !mesh.marker_names().iter().any(|n| n == m) {
                return Err(AssemblyError::UnknownMarker(m.clone()));
            }
        }
        let vspec = ElementSpec::vector(family, dim)?;
        let velocity = DofMap::new(&mesh, vspec)?;
        let pressure = DofMap::new(&mesh, ElementSpec::scalar(Family::P0, dim)?)?;
        let geometry: Vec<CellGeometry> =
            (0..mesh.num_cells()).map(|c| CellGeometry::new(&mesh, c)).collect();
        let rule = QuadratureRule::new(dim, form_degree(&vspec));
        let tab = velocity.element.tabulate(&rule);

        let mut dirichlet: Vec<usize> = dirichlet_markers
            .iter()
            .flat_map(|m| velocity.boundary_dofs(&mesh, m))
            .collect();
        dirichlet.sort_unstable();
        dirichlet.dedup();
        let mut dirichlet_mask = vec![false; velocity.ndofs()];
        for &i in &dirichlet {
            dirichlet_mask[i] = true;
        }

        let nl = velocity.local_size() * dim;
        let mut sb = SparsityBuilder::new(velocity.ndofs(), velocity.ndofs());
        let mut local = Vec::with_capacity(nl);
        for c in 0..mesh.num_cells() {
            local_dofs(&velocity, c, &mut local);
            sb.add_block(&local, &local);
        }
        let pattern = sb.build();

        // divergence block: B[K, (b,e)] = -int_K d phi_b / d x_e
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for c in 0..mesh.num_cells() {
            local_dofs(&velocity, c, &mut local);
            let d = cell_divergence_weights(&velocity, &rule, &tab, &geometry[c]);
            let mut row: Vec<(usize, f64)> = local.iter().copied().zip(d).collect();
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                indices.push(j);
                data.push(if dirichlet_mask[j] { 0.0 } else { -v });
            }
            indptr.push(indices.len());
        }
        let b = CsrMatrix::from_raw(mesh.num_cells(), velocity.ndofs(), indptr, indices, data);
        let bt = b.transpose();
        Ok(Discretization {
            mesh,
            velocity,
            pressure,
            geometry,
            rule,
            tab,
            pattern,
            b,
            bt,
            dirichlet,
            dirichlet_mask,
            dirichlet_markers: dirichlet_markers.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.dirichlet_mask[i]
    }

    pub fn dirichlet_markers(&self) -> &[String] {
        &self.dirichlet_markers
    }

    /// Divergence block with Dirichlet columns removed.
    pub fn divergence(&self) -> &CsrMatrix {
        &self.b
    }

    pub fn divergence_transpose(&self) -> &CsrMatrix {
        &self.bt
    }

    pub fn pressure_mass(&self) -> Vec<f64> {
        self.geometry.iter().map(|g| g.volume).collect()
    }

    /// Interpolate a vector field into the velocity space.
    pub fn interpolate(&self, field: &dyn Fn(&[f64]) -> [f64; 3]) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; self.velocity.ndofs()];
        let mut done = vec![false; self.velocity.num_scalar()];
        for c in 0..self.mesh.num_cells() {
            for (i, &s) in self.velocity.cell_dofs(c).iter().enumerate() {
                if done[s] {
                    continue;
                }
                done[s] = true;
                let v = self.apply_functional(c, i, field);
                for k in 0..dim {
                    out[s * dim + k] = v[k];
                }
            }
        }
        out
    }

    /// Apply local dof functional `i` of cell `c` to a vector field.
    pub fn apply_functional(&self, c: usize, i: usize, field: &dyn Fn(&[f64]) -> [f64; 3]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for (p, w) in &self.velocity.element.functionals[i] {
            let x = self.mesh.from_barycentric(c, &p[..=self.dim()]);
            let v = field(&x);
            for k in 0..3 {
                acc[k] += w * v[k];
            }
        }
        acc
    }

    /// Set Dirichlet values of `u` from boundary data, in marker order.
    pub fn apply_dirichlet(&self, u: &mut [f64], data: &[(String, VectorField)]) {
        let dim = self.dim();
        for (marker, g) in data {
            let scalars = self.velocity.boundary_scalar_dofs(&self.mesh, marker);
            for s in scalars {
                let ent = self.velocity.entity_of(s);
                let c = ent.cells(&self.mesh)[0];
                let i = self
                    .velocity
                    .cell_dofs(c)
                    .iter()
                    .position(|&t| t == s)
                    .expect("entity dof not in adjacent cell");
                let v = self.apply_functional(c, i, g.as_ref());
                for k in 0..dim {
                    u[s * dim + k] = v[k];
                }
            }
        }
    }

    /// Velocity at barycentric point `lam` of cell `c`.
    pub fn eval_velocity(&self, u: &[f64], c: usize, lam: &[f64]) -> [f64; 3] {
        let dim = self.dim();
        let mut p = [0.0; 4];
        p[..=dim].copy_from_slice(&lam[..=dim]);
        let vals = self.velocity.element.values(&p);
        let mut out = [0.0; 3];
        for (b, &s) in self.velocity.cell_dofs(c).iter().enumerate() {
            for k in 0..dim {
                out[k] += vals[b] * u[s * dim + k];
            }
        }
        out
    }

    /// Cell mean of the divergence, `(1/|K|) int_K div u`.
    pub fn project_p0_divergence(&self, u: &[f64]) -> Vec<f64> {
        let mut local = Vec::new();
        (0..self.mesh.num_cells())
            .map(|c| {
                local_dofs(&self.velocity, c, &mut local);
                let d = cell_divergence_weights(&self.velocity, &self.rule, &self.tab, &self.geometry[c]);
                let s: f64 = local.iter().zip(&d).map(|(&g, w)| w * u[g]).sum();
                s / self.geometry[c].volume
            })
            .collect()
    }

    fn check_state(&self, state: &DiscreteState) -> Result<(), AssemblyError> {
        if state.u.len() != self.velocity.ndofs() {
            return Err(AssemblyError::Mismatch {
                what: "velocity",
                expected: self.velocity.ndofs(),
                found: state.u.len(),
            });
        }
        if state.p.len() != self.pressure.ndofs() {
            return Err(AssemblyError::Mismatch {
                what: "pressure",
                expected: self.pressure.ndofs(),
                found: state.p.len(),
            });
        }
        Ok(())
    }

    /// Residual `(F_u, F_p)`; Dirichlet rows of `F_u` are zero.
    pub fn assemble_residual(
        &self,
        state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
    ) -> Result<(Vec<f64>, Vec<f64>), AssemblyError> {
        self.check_state(state)?;
        let (ru, rp, _) = self.assemble(state, params, force, None)?;
        Ok((ru, rp))
    }

    /// Residual together with the linearized block system.
    pub fn assemble_jacobian(
        &self,
        state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
        linearization: Linearization,
    ) -> Result<BlockSystem, AssemblyError> {
        self.check_state(state)?;
        let (ru, rp, a) = self.assemble(state, params, force, Some(linearization))?;
        Ok(BlockSystem {
            a: a.expect("matrix requested"),
            b: self.b.clone(),
            bt: self.bt.clone(),
            mp: self.pressure_mass(),
            rhs_u: ru,
            rhs_p: rp,
            dirichlet: self.dirichlet.clone(),
        })
    }

    /// Velocity block only (e.g. for multigrid rediscretization).
    pub fn assemble_velocity_block(
        &self,
        state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
        linearization: Linearization,
    ) -> Result<CsrMatrix, AssemblyError> {
        self.check_state(state)?;
        Ok(self.assemble(state, params, force, Some(linearization))?.2.unwrap())
    }

    #[allow(clippy::type_complexity)]
    fn assemble(
        &self,
        state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
        lin: Option<Linearization>,
    ) -> Result<(Vec<f64>, Vec<f64>, Option<CsrMatrix>), AssemblyError> {
        let nc = self.mesh.num_cells();
        let dim = self.dim();
        let nl = self.velocity.local_size() * dim;
        let mut ru = vec![0.0; self.velocity.ndofs()];
        let mut rp = vec![0.0; nc];
        let mut mat = lin.map(|_| self.pattern.clone());

        const BATCH: usize = 2048;
        let mut start = 0;
        while start < nc {
            let end = (start + BATCH).min(nc);
            let outs: Vec<CellOutput> = (start..end)
                .into_par_iter()
                .with_min_len(16)
                .map(|c| self.cell_kernel(c, state, params, force, lin))
                .collect();
            let mut local = Vec::with_capacity(nl);
            for (c, out) in (start..end).zip(outs) {
                local_dofs(&self.velocity, c, &mut local);
                for (i, &gi) in local.iter().enumerate() {
                    ru[gi] += out.res_u[i];
                }
                rp[c] += out.res_p;
                if let Some(m) = mat.as_mut() {
                    for (i, &gi) in local.iter().enumerate() {
                        let row = &out.mat[i * nl..(i + 1) * nl];
                        for (j, &gj) in local.iter().enumerate() {
                            m.add_to(gi, gj, row[j]);
                        }
                    }
                }
            }
            start = end;
        }

        for &i in &self.dirichlet {
            ru[i] = 0.0;
        }
        if let Some(m) = mat.as_mut() {
            self.eliminate_dirichlet(m);
        }
        Ok((ru, rp, mat))
    }

    /// Symmetric elimination: Dirichlet rows and columns zeroed, unit diagonal.
    fn eliminate_dirichlet(&self, m: &mut CsrMatrix) {
        let mask = &self.dirichlet_mask;
        for i in 0..m.nrows() {
            let row_is_bc = mask[i];
            let (cols, vals) = m.row_mut(i);
            for (k, &j) in cols.iter().enumerate() {
                if row_is_bc {
                    vals[k] = if j == i { 1.0 } else { 0.0 };
                } else if mask[j] {
                    vals[k] = 0.0;
                }
            }
        }
    }

    fn cell_kernel(
        &self,
        c: usize,
        state: &DiscreteState,
        params: &PhysicalParams,
        force: Option<&VectorField>,
        lin: Option<Linearization>,
    ) -> CellOutput {
        let dim = self.dim();
        let geom = &self.geometry[c];
        let nb = self.velocity.local_size();
        let nl = nb * dim;
        let dofs = self.velocity.cell_dofs(c);
        let mut uloc = vec![[0.0; 3]; nb];
        for (b, &s) in dofs.iter().enumerate() {
            for k in 0..dim {
                uloc[b][k] = state.u[s * dim + k];
            }
        }
        let pk = state.p[c];
        let nu = params.nu;
        let h = geom.diameter;
        let adv_on = params.advection;
        let supg_on = adv_on && params.delta_d > 0.0;
        let newton = lin == Some(Linearization::Newton);
        let want_mat = lin.is_some();
        let cont_graddiv = params.grad_div == GradDiv::Continuous && params.gamma > 0.0;
        let scale = geom.scale();
        let cell = self.mesh.cell(c);

        let mut out = CellOutput {
            res_u: vec![0.0; nl],
            res_p: 0.0,
            mat: if want_mat { vec![0.0; nl * nl] } else { Vec::new() },
        };
        let mut dvec = vec![0.0; nl];
        let mut phi = vec![0.0; nb];
        let mut g = vec![[0.0; 3]; nb];
        let mut hess = vec![[[0.0; 3]; 3]; nb];
        let mut lap = vec![0.0; nb];
        let mut adv = vec![0.0; nb];

        for (q, ev) in self.tab.evals.iter().enumerate() {
            let w = self.rule.weights[q] * scale;
            for b in 0..nb {
                phi[b] = ev.values[b];
                g[b] = geom.grad(&ev.dlam[b]);
                if supg_on {
                    hess[b] = geom.hessian(&ev.d2lam[b]);
                    lap[b] = (0..dim).map(|k| hess[b][k][k]).sum();
                }
            }
            // state at the point
            let mut uq = [0.0; 3];
            let mut gu = [[0.0; 3]; 3];
            let mut lapu = [0.0; 3];
            let mut gdiv = [0.0; 3];
            for b in 0..nb {
                for k in 0..dim {
                    let ub = uloc[b][k];
                    uq[k] += ub * phi[b];
                    for j in 0..dim {
                        gu[k][j] += ub * g[b][j];
                    }
                    if supg_on {
                        lapu[k] += ub * lap[b];
                        for j in 0..dim {
                            gdiv[j] += ub * hess[b][j][k];
                        }
                    }
                }
            }
            let fq = match force {
                Some(f) => {
                    let mut x = [0.0; 3];
                    for (k, &v) in cell.iter().enumerate() {
                        let xv = self.mesh.vertex(v);
                        for r in 0..dim {
                            x[r] += self.rule.points[q][k] * xv[r];
                        }
                    }
                    f(&x[..dim])
                }
                None => [0.0; 3],
            };
            let mut conv = [0.0; 3];
            if adv_on {
                for b in 0..nb {
                    adv[b] = (0..dim).map(|j| uq[j] * g[b][j]).sum();
                }
                for k in 0..dim {
                    conv[k] = (0..dim).map(|j| uq[j] * gu[k][j]).sum();
                }
            }
            let (mut delta, mut ddelta, mut strong) = (0.0, [0.0; 3], [0.0; 3]);
            if supg_on {
                let u2: f64 = (0..dim).map(|k| uq[k] * uq[k]).sum();
                let s = 4.0 * u2 / (h * h) + 144.0 * nu * nu / (h * h * h * h);
                delta = params.delta_d / s.sqrt();
                let f3 = -4.0 * params.delta_d * s.powf(-1.5) / (h * h);
                for k in 0..dim {
                    ddelta[k] = f3 * uq[k];
                    strong[k] = -nu * (lapu[k] + gdiv[k]) + conv[k] - fq[k];
                }
            }
            let divu: f64 = (0..dim).map(|k| gu[k][k]).sum();

            for a in 0..nb {
                for k in 0..dim {
                    let mut r = 0.0;
                    for j in 0..dim {
                        r += nu * (gu[k][j] + gu[j][k]) * g[a][j];
                    }
                    r += (conv[k] - fq[k]) * phi[a];
                    if supg_on {
                        r += delta * strong[k] * adv[a];
                    }
                    if cont_graddiv {
                        r += params.gamma * divu * g[a][k];
                    }
                    out.res_u[a * dim + k] += w * r;
                    dvec[a * dim + k] += w * g[a][k];
                }
            }

            if !want_mat {
                continue;
            }
            for a in 0..nb {
                let ga = g[a];
                for b in 0..nb {
                    let gb = g[b];
                    let mut base = nu * (0..dim).map(|j| ga[j] * gb[j]).sum::<f64>();
                    if adv_on {
                        base += adv[b] * phi[a];
                    }
                    if supg_on {
                        base += delta * (adv[b] - nu * lap[b]) * adv[a];
                    }
                    for k in 0..dim {
                        let row = (a * dim + k) * nl + b * dim;
                        for e in 0..dim {
                            let mut v = nu * gb[k] * ga[e];
                            if k == e {
                                v += base;
                            }
                            if supg_on {
                                v -= delta * nu * hess[b][k][e] * adv[a];
                            }
                            if newton && adv_on {
                                v += phi[b] * gu[k][e] * phi[a];
                            }
                            if newton && supg_on {
                                v += phi[b]
                                    * (delta * gu[k][e] * adv[a]
                                        + ddelta[e] * strong[k] * adv[a]
                                        + delta * strong[k] * ga[e]);
                            }
                            if cont_graddiv {
                                v += params.gamma * gb[e] * ga[k];
                            }
                            out.mat[row + e] += w * v;
                        }
                    }
                }
            }
        }

        // pressure, continuity and projected grad-div terms
        let div_int: f64 = (0..nl).map(|i| dvec[i] * uloc[i / dim][i % dim]).sum();
        out.res_p = -div_int;
        let gd = if params.grad_div == GradDiv::Projected {
            params.gamma / geom.volume
        } else {
            0.0
        };
        for i in 0..nl {
            out.res_u[i] += -pk * dvec[i] + gd * div_int * dvec[i];
        }
        if want_mat && gd != 0.0 {
            for i in 0..nl {
                let s = gd * dvec[i];
                let row = &mut out.mat[i * nl..(i + 1) * nl];
                for (j, v) in row.iter_mut().enumerate() {
                    *v += s * dvec[j];
                }
            }
        }
        out
    }
}

struct CellOutput {
    res_u: Vec<f64>,
    res_p: f64,
    mat: Vec<f64>,
}

/// Global vector dofs of a cell in local (basis, component) order.
pub fn local_dofs(map: &DofMap, c: usize, out: &mut Vec<usize>) {
    out.clear();
    let vs = map.value_size();
    for &s in map.cell_dofs(c) {
        for k in 0..vs {
            out.push(s * vs + k);
        }
    }
}

/// `int_K d phi_a / d x_c` for every local vector dof (a, c).
fn cell_divergence_weights(
    map: &DofMap,
    rule: &QuadratureRule,
    tab: &Tabulation,
    geom: &CellGeometry,
) -> Vec<f64> {
    let dim = geom.dim;
    let nb = map.local_size();
    let mut d = vec![0.0; nb * dim];
    let scale = geom.scale();
    for (q, ev) in tab.evals.iter().enumerate() {
        let w = rule.weights[q] * scale;
        for b in 0..nb {
            let gb = geom.grad(&ev.dlam[b]);
            for k in 0..dim {
                d[b * dim + k] += w * gb[k];
            }
        }
    }
    d
}
