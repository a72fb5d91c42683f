//! Finite elements: quadrature, reference bases, cell geometry and dof maps.

mod dofmap;
mod element;
mod quadrature;

pub use dofmap::{DofMap, EntityRef};
pub use element::{
    BasisEval, ElementSpec, Family, Functional, LocalEntity, ReferenceElement, Tabulation,
};
pub use quadrature::{gauss_jacobi01, QuadratureRule};

use thiserror::Error;

use crate::mesh::MeshLevel;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("unsupported element: {0}")]
    Unsupported(String),
    #[error("element dimension {space} does not match mesh dimension {mesh}")]
    DimensionMismatch { space: usize, mesh: usize },
    #[error("point {0:?} lies outside the reference simplex")]
    OutsideSimplex(Vec<f64>),
    #[error("mesh level has no refinement genealogy")]
    MissingGenealogy,
}

/// Affine geometry of one cell.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    pub dim: usize,
    pub volume: f64,
    /// Longest edge length.
    pub diameter: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 3]; 4],
}

impl CellGeometry {
    pub fn new(mesh: &MeshLevel, c: usize) -> Self {
        let d = mesh.dim();
        let cell = mesh.cell(c);
        let x0 = mesh.vertex(cell[0]);
        let mut j = [[0.0; 3]; 3];
        for k in 0..d {
            let xk = mesh.vertex(cell[k + 1]);
            for r in 0..d {
                j[r][k] = xk[r] - x0[r];
            }
        }
        let inv = invert(d, &j);
        let mut grad_lambda = [[0.0; 3]; 4];
        for k in 0..d {
            // row k of J^{-1}
            for r in 0..d {
                grad_lambda[k + 1][r] = inv[k][r];
                grad_lambda[0][r] -= inv[k][r];
            }
        }
        CellGeometry {
            dim: d,
            volume: mesh.cell_volume(c),
            diameter: mesh.cell_diameter(c),
            grad_lambda,
        }
    }

    /// Physical gradient from barycentric derivatives.
    #[inline]
    pub fn grad(&self, dlam: &[f64; 4]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for m in 0..=self.dim {
            let s = dlam[m];
            if s != 0.0 {
                for r in 0..self.dim {
                    g[r] += s * self.grad_lambda[m][r];
                }
            }
        }
        g
    }

    /// Physical Hessian from second barycentric derivatives.
    #[inline]
    pub fn hessian(&self, d2: &[[f64; 4]; 4]) -> [[f64; 3]; 3] {
        let d = self.dim;
        let mut h = [[0.0; 3]; 3];
        for m in 0..=d {
            for n in 0..=d {
                let s = d2[m][n];
                if s == 0.0 {
                    continue;
                }
                for r in 0..d {
                    for q in 0..d {
                        h[r][q] += s * self.grad_lambda[m][r] * self.grad_lambda[n][q];
                    }
                }
            }
        }
        h
    }

    /// Physical quadrature weight for a reference weight.
    #[inline]
    pub fn scale(&self) -> f64 {
        let reference = if self.dim == 2 { 0.5 } else { 1.0 / 6.0 };
        self.volume / reference
    }
}

fn invert(d: usize, a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    if d == 2 {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        inv[0][0] = a[1][1] / det;
        inv[0][1] = -a[0][1] / det;
        inv[1][0] = -a[1][0] / det;
        inv[1][1] = a[0][0] / det;
    } else {
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        for i in 0..3 {
            for j in 0..3 {
                // cofactor of (j, i)
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
            }
        }
    }
    inv
}

/// Quadrature degree used for the bilinear forms of a velocity space.
pub fn form_degree(velocity: &ElementSpec) -> usize {
    2 * velocity.degree() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_grid, refine_uniform, MeshLevel};

    fn single_tet() -> MeshLevel {
        let coords = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        MeshLevel::from_cells(3, coords, vec![0, 1, 2, 3], &|_| Some("wall".into())).unwrap()
    }

    fn single_triangle() -> MeshLevel {
        MeshLevel::from_cells(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0, 1, 2], &|_| {
            Some("wall".into())
        })
        .unwrap()
    }

    #[test]
    fn dof_counts() {
        let m = build_structured_grid(&[(0.0, 2.0), (0.0, 2.0)], &[16, 16], 2).unwrap();
        let p0 = DofMap::new(&m, ElementSpec::scalar(Family::P0, 2).unwrap()).unwrap();
        assert_eq!(p0.ndofs(), 512);
        let t = single_tet();
        let fb = DofMap::new(&t, ElementSpec::vector(Family::P1FB, 3).unwrap()).unwrap();
        assert_eq!(fb.ndofs(), 24);
        let g = build_structured_grid(&[(0.0, 1.0), (0.0, 1.0)], &[2, 2], 2).unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (9, 16));
        let p2 = DofMap::new(&g, ElementSpec::vector(Family::P2, 2).unwrap()).unwrap();
        assert_eq!(p2.ndofs(), 50);
        let p2fb = DofMap::new(&t, ElementSpec::vector(Family::P2FB, 3).unwrap()).unwrap();
        assert_eq!(p2fb.ndofs(), 3 * (4 + 6 + 4));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = single_tet();
        assert!(DofMap::new(&t, ElementSpec::vector(Family::P2, 2).unwrap()).is_err());
    }

    #[test]
    fn interior_dofs_of_refined_cells() {
        let tet = refine_uniform(&single_tet()).unwrap();
        let p2 = DofMap::new(&tet, ElementSpec::vector(Family::P2, 3).unwrap()).unwrap();
        assert_eq!(p2.interior_dofs_of_coarse_cell(&tet, 0).unwrap().len(), 3);
        let fb = DofMap::new(&tet, ElementSpec::vector(Family::P1FB, 3).unwrap()).unwrap();
        assert_eq!(fb.interior_dofs_of_coarse_cell(&tet, 0).unwrap().len(), 24);
        let tri = refine_uniform(&single_triangle()).unwrap();
        let p2 = DofMap::new(&tri, ElementSpec::vector(Family::P2, 2).unwrap()).unwrap();
        assert_eq!(p2.interior_dofs_of_coarse_cell(&tri, 0).unwrap().len(), 6);
        let coarse = single_tet();
        let m = DofMap::new(&coarse, ElementSpec::vector(Family::P1FB, 3).unwrap()).unwrap();
        assert!(matches!(
            m.interior_dofs_of_coarse_cell(&coarse, 0),
            Err(FemError::MissingGenealogy)
        ));
    }

    #[test]
    fn geometry_gradients() {
        let m = build_structured_grid(&[(0.0, 2.0), (0.0, 1.0), (0.0, 3.0)], &[1, 1, 1], 3).unwrap();
        for c in 0..m.num_cells() {
            let g = CellGeometry::new(&m, c);
            // grad(sum lambda) = 0 and grad(x) = e_x from sum lambda_k x_k
            for r in 0..3 {
                let s: f64 = (0..4).map(|k| g.grad_lambda[k][r]).sum();
                assert!(s.abs() < 1e-14);
                for q in 0..3 {
                    let gx: f64 = (0..4).map(|k| m.vertex(m.cell(c)[k])[q] * g.grad_lambda[k][r]).sum();
                    assert!((gx - if q == r { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
        }
    }

    /// Evaluate global basis function `s` from cell `c` at a physical point.
    fn global_value(m: &MeshLevel, map: &DofMap, c: usize, s: usize, x: &[f64]) -> f64 {
        let lam = m.barycentric(c, x);
        let mut p = [0.0; 4];
        p[..lam.len()].copy_from_slice(&lam);
        let vals = map.element.values(&p);
        map.cell_dofs(c)
            .iter()
            .zip(vals)
            .filter(|(&g, _)| g == s)
            .map(|(_, v)| v)
            .sum()
    }

    #[test]
    fn continuity_across_interior_facets() {
        let cases = [
            (build_structured_grid(&[(0.0, 1.0), (0.0, 1.0)], &[2, 2], 2).unwrap(), Family::P3),
            (build_structured_grid(&[(0.0, 1.0); 3], &[1, 1, 1], 3).unwrap(), Family::P3),
            (build_structured_grid(&[(0.0, 1.0); 3], &[1, 1, 1], 3).unwrap(), Family::P2FB),
            (build_structured_grid(&[(0.0, 1.0); 3], &[1, 1, 1], 3).unwrap(), Family::P1FB),
        ];
        for (m, fam) in cases {
            let d = m.dim();
            let map = DofMap::new(&m, ElementSpec::scalar(fam, d).unwrap()).unwrap();
            let rule = QuadratureRule::facet(d, 4);
            for f in 0..m.num_facets() {
                let [c0, c1] = m.facet_cells(f);
                if c1 == crate::mesh::NONE {
                    continue;
                }
                let fv = m.facet(f);
                for p in &rule.points {
                    let mut x = vec![0.0; d];
                    for (k, &v) in fv.iter().enumerate() {
                        for r in 0..d {
                            x[r] += p[k] * m.vertex(v)[r];
                        }
                    }
                    let mut dofs: Vec<usize> = map.cell_dofs(c0).to_vec();
                    dofs.extend_from_slice(map.cell_dofs(c1));
                    for s in dofs {
                        let a = global_value(&m, &map, c0, s, &x);
                        let b = global_value(&m, &map, c1, s, &x);
                        assert!((a - b).abs() < 1e-13, "{fam:?} facet {f} dof {s}: {a} vs {b}");
                    }
                }
            }
        }
    }
}
