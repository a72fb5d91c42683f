//! Finite element solver for the stationary incompressible Navier-Stokes
//! equations with a Reynolds-robust augmented Lagrangian preconditioner.

// Index loops mirror the element formulas; negated comparisons also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod bench;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod nonlinear;
pub mod saddle;
