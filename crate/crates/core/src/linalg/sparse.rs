//! Compressed sparse row matrices.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::LinalgError;

/// Square or rectangular CSR matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

/// Collects a sparsity pattern row by row.
#[derive(Clone, Debug)]
pub struct SparsityBuilder {
    ncols: usize,
    rows: Vec<Vec<usize>>,
}

impl SparsityBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparsityBuilder {
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    pub fn add(&mut self, i: usize, j: usize) {
        self.rows[i].push(j);
    }

    /// Add the dense block `rows x cols`.
    pub fn add_block(&mut self, rows: &[usize], cols: &[usize]) {
        for &i in rows {
            self.rows[i].extend_from_slice(cols);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        let nrows = self.rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for r in self.rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            indices.extend_from_slice(r);
            indptr.push(indices.len());
            *r = Vec::new();
        }
        let nnz = indices.len();
        CsrMatrix {
            nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data: vec![0.0; nnz],
        }
    }
}

impl CsrMatrix {
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(indptr.len(), nrows + 1);
        debug_assert_eq!(indices.len(), data.len());
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut b = SparsityBuilder::new(nrows, ncols);
        for &(i, j, _) in triplets {
            b.add(i, j);
        }
        let mut m = b.build();
        for &(i, j, v) in triplets {
            m.add_to(i, j, v);
        }
        m
    }

    pub fn from_dense(nrows: usize, ncols: usize, a: &[f64]) -> Self {
        let mut t = Vec::new();
        for i in 0..nrows {
            for j in 0..ncols {
                if a[i * ncols + j] != 0.0 {
                    t.push((i, j, a[i * ncols + j]));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.data.copy_from_slice(d);
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn row_mut(&mut self, i: usize) -> (&[usize], &mut [f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &mut self.data[r])
    }

    /// Storage position of entry (i, j), if it is in the pattern.
    #[inline]
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.indptr[i];
        let cols = &self.indices[start..self.indptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.data[p])
    }

    /// Add to an entry that must already be in the pattern.
    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.data[p] += v;
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let body = |(i, yi): (usize, &mut f64)| {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            *yi = s;
        };
        if self.nnz() > 20_000 {
            y.par_iter_mut().enumerate().with_min_len(256).for_each(body);
        } else {
            y.iter_mut().enumerate().for_each(body);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// y += alpha * A x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let ax = self.mul_vec(x);
        y.iter_mut().zip(ax).for_each(|(yi, a)| *yi += alpha * a);
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut fill = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                indices[fill[j]] = i;
                data[fill[j]] = self.data[p];
                fill[j] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            data,
        }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let n = other.ncols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut row_cols = Vec::new();
        for i in 0..self.nrows {
            row_cols.clear();
            for p in self.indptr[i]..self.indptr[i + 1] {
                let k = self.indices[p];
                let a = self.data[p];
                for q in other.indptr[k]..other.indptr[k + 1] {
                    let j = other.indices[q];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        row_cols.push(j);
                    }
                    acc[j] += a * other.data[q];
                }
            }
            row_cols.sort_unstable();
            for &j in &row_cols {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: n,
            indptr,
            indices,
            data,
        }
    }

    /// Scale column j by s[j].
    pub fn scale_columns(&mut self, s: &[f64]) {
        for (p, &j) in self.indices.iter().enumerate() {
            self.data[p] *= s[j];
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Dense row-major copy of the principal submatrix on sorted index set `idx`.
    pub fn submatrix_dense(&self, idx: &[usize]) -> Vec<f64> {
        self.block_dense(idx, idx)
    }

    /// Dense row-major copy of rows `rows` and sorted columns `cols`.
    pub fn block_dense(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        let n = cols.len();
        let mut out = vec![0.0; rows.len() * n];
        for (a, &i) in rows.iter().enumerate() {
            let (rc, rv) = self.row(i);
            // merge two sorted lists
            let (mut p, mut q) = (0, 0);
            while p < rc.len() && q < n {
                match rc[p].cmp(&cols[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        out[a * n + q] = rv[p];
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out[i * self.ncols + self.indices[p]] += self.data[p];
            }
        }
        out
    }

    /// Entrywise `self + alpha * other` over the union of both patterns.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = SparsityBuilder::new(self.nrows, self.ncols);
        for i in 0..self.nrows {
            b.rows[i].extend_from_slice(self.row(i).0);
            b.rows[i].extend_from_slice(other.row(i).0);
        }
        let mut m = b.build();
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                m.add_to(i, j, x);
            }
            let (c, v) = other.row(i);
            for (&j, &x) in c.iter().zip(v) {
                m.add_to(i, j, alpha * x);
            }
        }
        m
    }

    /// Write in Matrix Market coordinate format (1-based).
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<(), LinalgError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(f, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                writeln!(f, "{} {} {:e}", i + 1, self.indices[p] + 1, self.data[p])?;
            }
        }
        Ok(())
    }
}
