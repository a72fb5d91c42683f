//! Reference elements with bases written as polynomials in barycentric coordinates.

use super::quadrature::QuadratureRule;
use super::FemError;
use crate::mesh::{LOCAL_EDGES_2D, LOCAL_EDGES_3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    P0,
    P1,
    P2,
    P3,
    /// Linear Lagrange enriched by cubic facet bubbles.
    P1FB,
    /// Quadratic Lagrange enriched by cubic facet bubbles.
    P2FB,
}

/// Mesh entity a local basis function is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalEntity {
    Vertex(usize),
    /// Local edge index and position along it (0 nearer the edge's first local vertex).
    Edge(usize, usize),
    /// Facet opposite the given local vertex.
    Facet(usize),
    Cell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ElementSpec {
    pub family: Family,
    pub dim: usize,
    pub value_size: usize,
}

impl ElementSpec {
    pub fn new(family: Family, dim: usize, value_size: usize) -> Result<Self, FemError> {
        if dim != 2 && dim != 3 {
            return Err(FemError::Unsupported(format!("dimension {dim}")));
        }
        if value_size != 1 && value_size != dim {
            return Err(FemError::Unsupported(format!(
                "value size {value_size} in dimension {dim}"
            )));
        }
        if matches!(family, Family::P1FB | Family::P2FB) && dim != 3 {
            return Err(FemError::Unsupported(format!(
                "{family:?} is only provided in three dimensions"
            )));
        }
        Ok(ElementSpec {
            family,
            dim,
            value_size,
        })
    }

    pub fn vector(family: Family, dim: usize) -> Result<Self, FemError> {
        Self::new(family, dim, dim)
    }

    pub fn scalar(family: Family, dim: usize) -> Result<Self, FemError> {
        Self::new(family, dim, 1)
    }

    /// Polynomial degree of the highest basis function.
    pub fn degree(&self) -> usize {
        match self.family {
            Family::P0 => 0,
            Family::P1 => 1,
            Family::P2 => 2,
            Family::P3 | Family::P1FB | Family::P2FB => 3,
        }
    }

    pub fn has_bubbles(&self) -> bool {
        matches!(self.family, Family::P1FB | Family::P2FB)
    }
}

/// One monomial `coef * prod(lambda_k^exp_k)`.
#[derive(Clone, Copy, Debug)]
struct Term {
    coef: f64,
    exp: [u8; 4],
}

fn term(coef: f64, pairs: &[(usize, u8)]) -> Term {
    let mut exp = [0u8; 4];
    for &(k, e) in pairs {
        exp[k] += e;
    }
    Term { coef, exp }
}

/// Values and barycentric derivatives of every basis function at one point.
#[derive(Clone, Debug)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// d phi / d lambda_m.
    pub dlam: Vec<[f64; 4]>,
    /// d^2 phi / d lambda_m d lambda_n.
    pub d2lam: Vec<[[f64; 4]; 4]>,
}

/// A dof functional: weighted sum of point evaluations (barycentric points).
pub type Functional = Vec<([f64; 4], f64)>;

/// Scalar reference element.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub spec: ElementSpec,
    basis: Vec<Vec<Term>>,
    pub entities: Vec<LocalEntity>,
    pub functionals: Vec<Functional>,
}

fn vertex_point(i: usize) -> [f64; 4] {
    let mut p = [0.0; 4];
    p[i] = 1.0;
    p
}

fn combo(pairs: &[(usize, f64)]) -> [f64; 4] {
    let mut p = [0.0; 4];
    for &(k, w) in pairs {
        p[k] += w;
    }
    p
}

fn ipow(x: f64, e: u8) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        3 => x * x * x,
        _ => x.powi(e as i32),
    }
}

impl ReferenceElement {
    pub fn new(spec: ElementSpec) -> Self {
        let d = spec.dim;
        let nv = d + 1;
        let edges: &[[usize; 2]] = if d == 2 { &LOCAL_EDGES_2D } else { &LOCAL_EDGES_3D };
        let mut basis = Vec::new();
        let mut entities = Vec::new();
        let mut functionals: Vec<Functional> = Vec::new();
        let family = spec.family;

        if family == Family::P0 {
            basis.push(vec![term(1.0, &[])]);
            entities.push(LocalEntity::Cell);
            let c = 1.0 / nv as f64;
            functionals.push(vec![([c, c, c, if d == 3 { c } else { 0.0 }], 1.0)]);
            return ReferenceElement {
                spec,
                basis,
                entities,
                functionals,
            };
        }

        // vertex functions
        for i in 0..nv {
            let b = match family {
                Family::P1 | Family::P1FB => vec![term(1.0, &[(i, 1)])],
                Family::P2 | Family::P2FB => vec![term(2.0, &[(i, 2)]), term(-1.0, &[(i, 1)])],
                Family::P3 => vec![
                    term(4.5, &[(i, 3)]),
                    term(-4.5, &[(i, 2)]),
                    term(1.0, &[(i, 1)]),
                ],
                Family::P0 => unreachable!(),
            };
            basis.push(b);
            entities.push(LocalEntity::Vertex(i));
            functionals.push(vec![(vertex_point(i), 1.0)]);
        }
        // edge functions
        match family {
            Family::P2 | Family::P2FB => {
                for (k, e) in edges.iter().enumerate() {
                    basis.push(vec![term(4.0, &[(e[0], 1), (e[1], 1)])]);
                    entities.push(LocalEntity::Edge(k, 0));
                    functionals.push(vec![(combo(&[(e[0], 0.5), (e[1], 0.5)]), 1.0)]);
                }
            }
            Family::P3 => {
                for (k, e) in edges.iter().enumerate() {
                    for pos in 0..2 {
                        let (a, b) = if pos == 0 { (e[0], e[1]) } else { (e[1], e[0]) };
                        basis.push(vec![
                            term(13.5, &[(a, 2), (b, 1)]),
                            term(-4.5, &[(a, 1), (b, 1)]),
                        ]);
                        entities.push(LocalEntity::Edge(k, pos));
                        functionals.push(vec![(combo(&[(a, 2.0 / 3.0), (b, 1.0 / 3.0)]), 1.0)]);
                    }
                }
            }
            _ => {}
        }
        // face / bubble functions
        match family {
            Family::P3 if d == 2 => {
                basis.push(vec![term(27.0, &[(0, 1), (1, 1), (2, 1)])]);
                entities.push(LocalEntity::Cell);
                let t = 1.0 / 3.0;
                functionals.push(vec![([t, t, t, 0.0], 1.0)]);
            }
            Family::P3 | Family::P1FB | Family::P2FB => {
                for i in 0..nv {
                    let others: Vec<usize> = (0..nv).filter(|&k| k != i).collect();
                    let pairs: Vec<(usize, u8)> = others.iter().map(|&k| (k, 1)).collect();
                    basis.push(vec![term(27.0, &pairs)]);
                    entities.push(LocalEntity::Facet(i));
                    let t = 1.0 / 3.0;
                    let bary = combo(&[(others[0], t), (others[1], t), (others[2], t)]);
                    let mut f = vec![(bary, 1.0)];
                    // hierarchical: subtract the Lagrange interpolant at the facet barycentre
                    match family {
                        Family::P1FB => {
                            for &k in &others {
                                f.push((vertex_point(k), -t));
                            }
                        }
                        Family::P2FB => {
                            for &k in &others {
                                f.push((vertex_point(k), 1.0 / 9.0));
                            }
                            for a in 0..3 {
                                for b in a + 1..3 {
                                    let m = combo(&[(others[a], 0.5), (others[b], 0.5)]);
                                    f.push((m, -4.0 / 9.0));
                                }
                            }
                        }
                        _ => {}
                    }
                    functionals.push(f);
                }
            }
            _ => {}
        }
        ReferenceElement {
            spec,
            basis,
            entities,
            functionals,
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Evaluate one basis function and its barycentric derivatives.
    fn eval_one(&self, i: usize, lam: &[f64; 4], out_d: &mut [f64; 4], out_d2: &mut [[f64; 4]; 4]) -> f64 {
        let nv = self.spec.dim + 1;
        let mut val = 0.0;
        *out_d = [0.0; 4];
        *out_d2 = [[0.0; 4]; 4];
        for t in &self.basis[i] {
            let pw: [f64; 4] = std::array::from_fn(|k| if k < nv { ipow(lam[k], t.exp[k]) } else { 1.0 });
            let full: f64 = t.coef * pw.iter().product::<f64>();
            val += full;
            for m in 0..nv {
                let em = t.exp[m];
                if em == 0 {
                    continue;
                }
                let mut pm = pw;
                pm[m] = em as f64 * ipow(lam[m], em - 1);
                out_d[m] += t.coef * pm.iter().product::<f64>();
                for n in 0..nv {
                    let en = if n == m { em - 1 } else { t.exp[n] };
                    if en == 0 {
                        continue;
                    }
                    let mut pmn = pm;
                    if n == m {
                        pmn[m] = (em as f64) * (em as f64 - 1.0) * ipow(lam[m], em - 2);
                    } else {
                        pmn[n] = en as f64 * ipow(lam[n], en - 1);
                    }
                    out_d2[m][n] += t.coef * pmn.iter().product::<f64>();
                }
            }
        }
        val
    }

    /// Evaluate all basis functions at a barycentric point without a domain check.
    pub fn eval(&self, lam: &[f64; 4]) -> BasisEval {
        let n = self.len();
        let mut values = Vec::with_capacity(n);
        let mut dlam = Vec::with_capacity(n);
        let mut d2lam = Vec::with_capacity(n);
        let mut d = [0.0; 4];
        let mut d2 = [[0.0; 4]; 4];
        for i in 0..n {
            values.push(self.eval_one(i, lam, &mut d, &mut d2));
            dlam.push(d);
            d2lam.push(d2);
        }
        BasisEval {
            values,
            dlam,
            d2lam,
        }
    }

    /// Evaluate the basis at a point of the closed reference simplex.
    pub fn eval_basis(&self, lam: &[f64]) -> Result<BasisEval, FemError> {
        let nv = self.spec.dim + 1;
        if lam.len() != nv {
            return Err(FemError::OutsideSimplex(lam.to_vec()));
        }
        let sum: f64 = lam.iter().sum();
        if lam.iter().any(|&l| l < -1e-12) || (sum - 1.0).abs() > 1e-12 {
            return Err(FemError::OutsideSimplex(lam.to_vec()));
        }
        let mut p = [0.0; 4];
        p[..nv].copy_from_slice(lam);
        Ok(self.eval(&p))
    }

    /// Values only, at a barycentric point.
    pub fn values(&self, lam: &[f64; 4]) -> Vec<f64> {
        let nv = self.spec.dim + 1;
        self.basis
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| t.coef * (0..nv).map(|k| ipow(lam[k], t.exp[k])).product::<f64>())
                    .sum()
            })
            .collect()
    }

    /// Apply dof functional `i` to a function given by its values at barycentric points.
    pub fn apply_functional(&self, i: usize, f: &mut dyn FnMut(&[f64; 4]) -> f64) -> f64 {
        self.functionals[i].iter().map(|(p, w)| w * f(p)).sum()
    }

    /// Tabulate the basis at every point of a quadrature rule.
    pub fn tabulate(&self, rule: &QuadratureRule) -> Tabulation {
        let evals: Vec<BasisEval> = rule.points.iter().map(|p| self.eval(p)).collect();
        Tabulation {
            nb: self.len(),
            evals,
        }
    }
}

/// Basis evaluations at all points of a quadrature rule.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub nb: usize,
    pub evals: Vec<BasisEval>,
}
