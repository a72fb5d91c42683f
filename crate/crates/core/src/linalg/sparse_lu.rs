//! Left-looking sparse LU (Gilbert–Peierls) with threshold partial pivoting.

use super::{minimum_degree, CsrMatrix, LinalgError};

/// Column-compressed storage used internally by the factorization.
#[derive(Clone, Debug, Default)]
struct Csc {
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    vals: Vec<f64>,
}

/// Sparse LU factors `P A Q = L U`.
#[derive(Clone, Debug)]
pub struct SparseLu {
    n: usize,
    q: Vec<usize>,
    pinv: Vec<usize>,
    l: Csc,
    u: Csc,
}

/// Prefer the diagonal of the symmetrically permuted matrix when it is within
/// this factor of the largest candidate pivot.
const PIVOT_THRESHOLD: f64 = 0.1;

impl SparseLu {
    /// Factor a square matrix with a minimum-degree column ordering.
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let q = minimum_degree(a);
        Self::factor_with_ordering(a, q)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, q: Vec<usize>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                found: a.ncols(),
            });
        }
        // CSR of the transpose is CSC of A
        let at = a.transpose();
        let (acp, ari, avs) = (at.indptr(), at.indices(), at.data());
        let tiny = 1e-14 * a.max_abs();

        const UNSET: usize = usize::MAX;
        let mut pinv = vec![UNSET; n];
        let mut l = Csc {
            colptr: Vec::with_capacity(n + 1),
            ..Default::default()
        };
        let mut u = Csc {
            colptr: Vec::with_capacity(n + 1),
            ..Default::default()
        };
        let mut x = vec![0.0; n];
        let mut xi = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut pstack = vec![0usize; n];
        let mut marked = vec![false; n];

        for k in 0..n {
            l.colptr.push(l.rowidx.len());
            u.colptr.push(u.rowidx.len());
            let col = q[k];
            let brows = &ari[acp[col]..acp[col + 1]];
            let bvals = &avs[acp[col]..acp[col + 1]];

            // symbolic: reach of the column's pattern in the graph of L
            let mut top = n;
            for &i in brows {
                if !marked[i] {
                    top = dfs(i, &l, k, &pinv, &mut marked, &mut stack, &mut pstack, &mut xi, top);
                }
            }
            for &i in &xi[top..n] {
                marked[i] = false;
                x[i] = 0.0;
            }
            for (&i, &v) in brows.iter().zip(bvals) {
                x[i] = v;
            }
            // numeric: sparse triangular solve in topological order
            for px in top..n {
                let j = xi[px];
                let jj = pinv[j];
                if jj == UNSET {
                    continue;
                }
                let xj = x[j];
                let (s, e) = (l.colptr[jj] + 1, l.colptr[jj + 1]);
                for p in s..e {
                    x[l.rowidx[p]] -= l.vals[p] * xj;
                }
            }
            // pivot selection
            let mut ipiv = UNSET;
            let mut amax = -1.0;
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    let t = x[i].abs();
                    if t > amax {
                        amax = t;
                        ipiv = i;
                    }
                } else {
                    u.rowidx.push(pinv[i]);
                    u.vals.push(x[i]);
                }
            }
            if ipiv == UNSET || !(amax > tiny) {
                return Err(LinalgError::Singular {
                    step: k,
                    pivot: amax.max(0.0),
                });
            }
            if pinv[col] == UNSET && x[col].abs() >= PIVOT_THRESHOLD * amax {
                ipiv = col;
            }
            let pivot = x[ipiv];
            u.rowidx.push(k);
            u.vals.push(pivot);
            pinv[ipiv] = k;
            l.rowidx.push(ipiv);
            l.vals.push(1.0);
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    l.rowidx.push(i);
                    l.vals.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l.colptr.push(l.rowidx.len());
        u.colptr.push(u.rowidx.len());
        for r in l.rowidx.iter_mut() {
            *r = pinv[*r];
        }
        Ok(SparseLu { n, q, pinv, l, u })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in L and U.
    pub fn fill(&self) -> usize {
        self.l.rowidx.len() + self.u.rowidx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[self.pinv[i]] = b[i];
        }
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for p in self.l.colptr[j] + 1..self.l.colptr[j + 1] {
                    y[self.l.rowidx[p]] -= self.l.vals[p] * yj;
                }
            }
        }
        for j in (0..n).rev() {
            let last = self.u.colptr[j + 1] - 1;
            y[j] /= self.u.vals[last];
            let yj = y[j];
            if yj != 0.0 {
                for p in self.u.colptr[j]..last {
                    y[self.u.rowidx[p]] -= self.u.vals[p] * yj;
                }
            }
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.q[k]] = y[k];
        }
        x
    }
}

impl super::Preconditioner for SparseLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.solve(r));
    }
}

/// Depth-first search from row `j` in the graph of the partial L factor; pushes
/// the finished rows onto `xi[..top]` in reverse topological order.
#[allow(clippy::too_many_arguments)]
fn dfs(
    j: usize,
    l: &Csc,
    k: usize,
    pinv: &[usize],
    marked: &mut [bool],
    stack: &mut [usize],
    pstack: &mut [usize],
    xi: &mut [usize],
    mut top: usize,
) -> usize {
    let col_range = |row: usize| -> (usize, usize) {
        let jj = pinv[row];
        if jj == usize::MAX || jj >= k {
            (0, 0)
        } else {
            (l.colptr[jj] + 1, l.colptr[jj + 1])
        }
    };
    let mut head: isize = 0;
    stack[0] = j;
    while head >= 0 {
        let h = head as usize;
        let node = stack[h];
        if !marked[node] {
            marked[node] = true;
            pstack[h] = col_range(node).0;
        }
        let end = col_range(node).1;
        let mut done = true;
        let mut p = pstack[h];
        while p < end {
            let i = l.rowidx[p];
            p += 1;
            if marked[i] {
                continue;
            }
            pstack[h] = p;
            head += 1;
            stack[head as usize] = i;
            done = false;
            break;
        }
        if done {
            head -= 1;
            top -= 1;
            xi[top] = node;
        }
    }
    top
}
