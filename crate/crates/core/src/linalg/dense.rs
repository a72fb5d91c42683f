//! Dense LU factorization with partial pivoting.

use super::LinalgError;

/// LU factors of a small dense matrix, `P A = L U`, stored in place.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factor a row-major `n x n` matrix. Pivots smaller than
    /// `1e-14 * max|a_ij|` are reported as singular.
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::Dimension {
                expected: n * n,
                found: a.len(),
            });
        }
        let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tiny = 1e-14 * amax;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(LinalgError::Singular { step: k, pivot: best });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..];
            for row_i in tail.chunks_mut(n) {
                let f = row_i[k] / pivot;
                row_i[k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        row_i[j] -= f * row_k[j];
                    }
                }
            }
        }
        Ok(DenseLu { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(l, x)| l * x).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&y[i + 1..]).map(|(u, x)| u * x).sum();
            y[i] = (y[i] - s) / self.lu[i * n + i];
        }
        b.copy_from_slice(&y);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Unit lower factor L and upper factor U (row-major) and the row permutation.
    pub fn factors(&self) -> (Vec<f64>, Vec<f64>, &[usize]) {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        let mut u = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = self.lu[i * n + j];
                if j < i {
                    l[i * n + j] = v;
                } else {
                    u[i * n + j] = v;
                }
            }
            l[i * n + i] = 1.0;
        }
        (l, u, &self.perm)
    }
}
