//! Sparse and dense linear algebra, Krylov solvers and a sparse direct solver.
//!
//! Reductions over long vectors are computed in fixed-size chunks whose partial
//! sums are combined in order, so results do not depend on the thread count.

mod dense;
mod krylov;
mod ordering;
mod sparse;
mod sparse_lu;

pub use dense::DenseLu;
pub use krylov::{gmres, GmresConfig, GmresOutcome, Identity, LinearOperator, Preconditioner};
pub use ordering::minimum_degree;
pub use sparse::{CsrMatrix, SparsityBuilder};
pub use sparse_lu::SparseLu;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:e} at step {step})")]
    Singular { step: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("Krylov breakdown at iteration {0}")]
    Breakdown(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const CHUNK: usize = 4096;

/// Dot product with a thread-count independent summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if y.len() <= CHUNK {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
    } else {
        y.par_chunks_mut(CHUNK)
            .zip(x.par_chunks(CHUNK))
            .for_each(|(yc, xc)| yc.iter_mut().zip(xc).for_each(|(yi, xi)| *yi += alpha * xi));
    }
}

/// Subtract the arithmetic mean from a vector slice.
pub fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}
