//! Collapsed-coordinate (Stroud conical product) Gauss–Jacobi rules on simplices.

use nalgebra::{DMatrix, SymmetricEigen};

/// Quadrature rule on the reference simplex.
///
/// Points are barycentric coordinates; weights sum to the reference simplex
/// volume (1/2 in 2D, 1/6 in 3D).
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub dim: usize,
    pub degree: usize,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

/// Gauss–Jacobi nodes and weights on [0, 1] for the weight (1 - t)^alpha.
pub fn gauss_jacobi01(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let beta = 0.0;
    let ab = alpha + beta;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (k, d) in diag.iter_mut().enumerate() {
        let kf = k as f64;
        *d = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
    }
    for (i, o) in off.iter_mut().enumerate() {
        let k = (i + 1) as f64;
        let s = 2.0 * k + ab;
        let b = 4.0 * k * (k + alpha) * (k + beta) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0));
        *o = b.sqrt();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = diag[k];
        if k + 1 < n {
            m[(k, k + 1)] = off[k];
            m[(k + 1, k)] = off[k];
        }
    }
    // integral of (1 - x)^alpha over [-1, 1]
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // map x in [-1, 1] to t = (1 + x) / 2; (1 - x)^alpha = 2^alpha (1 - t)^alpha
    let scale = 0.5f64.powf(alpha + 1.0);
    let nodes = pairs.iter().map(|p| 0.5 * (1.0 + p.0)).collect();
    let weights = pairs.iter().map(|p| p.1 * scale).collect();
    (nodes, weights)
}

impl QuadratureRule {
    /// A rule exact for polynomials of total degree `degree` on the reference simplex.
    pub fn new(dim: usize, degree: usize) -> Self {
        let n = (degree + 2) / 2;
        let n = n.max(1);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match dim {
            2 => {
                let (u, wu) = gauss_jacobi01(n, 1.0);
                let (v, wv) = gauss_jacobi01(n, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let x = u[i];
                        let y = v[j] * (1.0 - u[i]);
                        points.push([1.0 - x - y, x, y, 0.0]);
                        weights.push(wu[i] * wv[j]);
                    }
                }
            }
            3 => {
                let (u, wu) = gauss_jacobi01(n, 2.0);
                let (v, wv) = gauss_jacobi01(n, 1.0);
                let (w, ww) = gauss_jacobi01(n, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let x = u[i];
                            let y = v[j] * (1.0 - u[i]);
                            let z = w[k] * (1.0 - u[i]) * (1.0 - v[j]);
                            points.push([1.0 - x - y - z, x, y, z]);
                            weights.push(wu[i] * wv[j] * ww[k]);
                        }
                    }
                }
            }
            _ => panic!("unsupported dimension {dim}"),
        }
        QuadratureRule {
            dim,
            degree,
            points,
            weights,
        }
    }

    /// Gauss–Legendre rule on a facet of the reference simplex (dimension `dim - 1`),
    /// returned in the facet's own barycentric coordinates (length `dim`).
    pub fn facet(dim: usize, degree: usize) -> Self {
        if dim == 2 {
            let n = ((degree + 2) / 2).max(1);
            let (t, w) = gauss_jacobi01(n, 0.0);
            QuadratureRule {
                dim: 1,
                degree,
                points: t.iter().map(|&s| [1.0 - s, s, 0.0, 0.0]).collect(),
                weights: w,
            }
        } else {
            let mut r = QuadratureRule::new(2, degree);
            r.dim = 2;
            r
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
