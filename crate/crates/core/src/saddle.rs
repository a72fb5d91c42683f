//! Outer solver for the linearized saddle-point system: block preconditioners
//! wrapped in flexible GMRES.

use thiserror::Error;

use crate::assembly::BlockSystem;
use crate::linalg::{gmres, CsrMatrix, GmresConfig, GmresOutcome, LinalgError, LinearOperator, Preconditioner, SparseLu};

#[derive(Debug, Error)]
pub enum SaddleError {
    #[error("outer Krylov solver stopped after {iterations} iterations at residual {final_residual:e}")]
    NotConverged {
        iterations: usize,
        final_residual: f64,
        residuals: Vec<f64>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The monolithic operator `[A Bᵀ; B 0]` acting on `(u, p)`.
pub struct SaddleOperator<'a> {
    pub a: &'a CsrMatrix,
    pub b: &'a CsrMatrix,
    pub bt: &'a CsrMatrix,
}

impl<'a> SaddleOperator<'a> {
    pub fn new(sys: &'a BlockSystem) -> Self {
        SaddleOperator {
            a: &sys.a,
            b: &sys.b,
            bt: &sys.bt,
        }
    }

    fn nu(&self) -> usize {
        self.a.nrows()
    }
}

impl LinearOperator for SaddleOperator<'_> {
    fn dim(&self) -> usize {
        self.a.nrows() + self.b.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.nu();
        let (xu, xp) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        self.a.matvec(xu, yu);
        self.bt.matvec_add(1.0, xp, yu);
        self.b.matvec(xu, yp);
    }
}

/// Remove the `mp`-weighted mean from a pressure vector.
pub fn project_mean(mp: &[f64], p: &mut [f64]) {
    let vol: f64 = mp.iter().sum();
    let mean = mp.iter().zip(p.iter()).map(|(m, q)| m * q).sum::<f64>() / vol;
    p.iter_mut().for_each(|q| *q -= mean);
}

/// Schur complement approximation `S⁻¹ ≈ -(ν+γ) M_p⁻¹` for a diagonal pressure mass.
pub struct MassSchur<'a> {
    pub scale: f64,
    pub mp: &'a [f64],
}

impl<'a> MassSchur<'a> {
    pub fn new(nu: f64, gamma: f64, mp: &'a [f64]) -> Self {
        MassSchur {
            scale: -(nu + gamma),
            mp,
        }
    }
}

impl Preconditioner for MassSchur<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), mi) in z.iter_mut().zip(r).zip(self.mp) {
            *zi = self.scale * ri / mi;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockMode {
    /// Lower, Schur and upper factors.
    Full,
    Diagonal,
    Lower,
    Upper,
}

impl std::str::FromStr for BlockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(BlockMode::Full),
            "diagonal" | "diag" => Ok(BlockMode::Diagonal),
            "lower" => Ok(BlockMode::Lower),
            "upper" => Ok(BlockMode::Upper),
            _ => Err(format!("unknown block preconditioner mode `{s}`")),
        }
    }
}

/// Block factorization preconditioner built from a momentum solver and a
/// Schur complement action.
pub struct BlockPreconditioner<'a> {
    pub a_inv: &'a dyn Preconditioner,
    pub s_inv: &'a dyn Preconditioner,
    pub b: &'a CsrMatrix,
    pub bt: &'a CsrMatrix,
    pub mode: BlockMode,
    /// Pressure mass used for the mean-zero projection of enclosed flows.
    pub enclosed: Option<&'a [f64]>,
}

impl Preconditioner for BlockPreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let nu = self.b.ncols();
        let (ru, rp) = r.split_at(nu);
        let (zu, zp) = z.split_at_mut(nu);
        match self.mode {
            BlockMode::Diagonal => {
                self.a_inv.apply(ru, zu);
                self.s_inv.apply(rp, zp);
            }
            BlockMode::Lower | BlockMode::Full => {
                self.a_inv.apply(ru, zu);
                let mut rp2 = self.b.mul_vec(zu);
                rp2.iter_mut().zip(rp).for_each(|(x, r)| *x = r - *x);
                self.s_inv.apply(&rp2, zp);
                if let Some(mp) = self.enclosed {
                    project_mean(mp, zp);
                }
                if self.mode == BlockMode::Full {
                    let btp = self.bt.mul_vec(zp);
                    let mut corr = vec![0.0; nu];
                    self.a_inv.apply(&btp, &mut corr);
                    zu.iter_mut().zip(&corr).for_each(|(x, c)| *x -= c);
                }
            }
            BlockMode::Upper => {
                self.s_inv.apply(rp, zp);
                if let Some(mp) = self.enclosed {
                    project_mean(mp, zp);
                }
                let mut ru2 = self.bt.mul_vec(zp);
                ru2.iter_mut().zip(ru).for_each(|(x, r)| *x = r - *x);
                self.a_inv.apply(&ru2, zu);
            }
        }
        if let Some(mp) = self.enclosed {
            project_mean(mp, zp);
        }
    }
}

/// The matrix `-B diag(A)⁻¹ Bᵀ` used as Schur surrogate by SIMPLE.
pub fn simple_schur(a: &CsrMatrix, b: &CsrMatrix, bt: &CsrMatrix) -> CsrMatrix {
    let dinv: Vec<f64> = a.diag().iter().map(|d| -1.0 / d).collect();
    let mut bd = b.clone();
    bd.scale_columns(&dinv);
    bd.matmul(bt)
}

/// SIMPLE preconditioner (no augmentation): `Ã⁻¹` from the supplied momentum
/// solver, `diag(A)⁻¹` in the velocity update, and an exact factorization of
/// the Schur surrogate.
pub struct SimplePreconditioner<'a> {
    pub a_inv: &'a dyn Preconditioner,
    pub b: &'a CsrMatrix,
    pub bt: &'a CsrMatrix,
    dinv: Vec<f64>,
    schur: SparseLu,
    /// Pressure mass for enclosed flows; the surrogate is then pinned at dof 0.
    enclosed: Option<&'a [f64]>,
}

impl<'a> SimplePreconditioner<'a> {
    pub fn new(
        a: &CsrMatrix,
        b: &'a CsrMatrix,
        bt: &'a CsrMatrix,
        a_inv: &'a dyn Preconditioner,
        enclosed: Option<&'a [f64]>,
    ) -> Result<Self, LinalgError> {
        let mut s = simple_schur(a, b, bt);
        if enclosed.is_some() {
            pin_first(&mut s);
        }
        Ok(SimplePreconditioner {
            a_inv,
            b,
            bt,
            dinv: a.diag().iter().map(|d| 1.0 / d).collect(),
            schur: SparseLu::factor(&s)?,
            enclosed,
        })
    }
}

/// Replace row and column 0 by the identity, removing a constant null space.
fn pin_first(s: &mut CsrMatrix) {
    for i in 0..s.nrows() {
        let (cols, vals) = s.row_mut(i);
        for (c, v) in cols.iter().zip(vals.iter_mut()) {
            if i == 0 || *c == 0 {
                *v = if i == *c { 1.0 } else { 0.0 };
            }
        }
    }
}

impl Preconditioner for SimplePreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let nu = self.b.ncols();
        let (ru, rp) = r.split_at(nu);
        let (zu, zp) = z.split_at_mut(nu);
        self.a_inv.apply(ru, zu);
        let mut s = self.b.mul_vec(zu);
        s.iter_mut().zip(rp).for_each(|(x, r)| *x = r - *x);
        if self.enclosed.is_some() {
            // the surrogate's range is orthogonal to constants
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            s.iter_mut().for_each(|x| *x -= mean);
            s[0] = 0.0;
        }
        zp.copy_from_slice(&self.schur.solve(&s));
        if let Some(mp) = self.enclosed {
            project_mean(mp, zp);
        }
        let btp = self.bt.mul_vec(zp);
        for ((x, g), d) in zu.iter_mut().zip(&btp).zip(&self.dinv) {
            *x -= d * g;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovConfig {
    pub max_iterations: usize,
    pub restart: usize,
    pub atol: f64,
    pub rtol: f64,
}

impl KrylovConfig {
    pub fn for_dim(dim: usize) -> Self {
        if dim == 3 {
            KrylovConfig {
                max_iterations: 200,
                restart: 100,
                atol: 1e-8,
                rtol: 1e-5,
            }
        } else {
            KrylovConfig {
                max_iterations: 200,
                restart: 100,
                atol: 1e-10,
                rtol: 1e-6,
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub du: Vec<f64>,
    pub dp: Vec<f64>,
    pub outcome: GmresOutcome,
}

/// Solve `J (δu, δp) = -F` for the Newton (or Picard) update with flexible GMRES.
pub fn solve_linearized(
    sys: &BlockSystem,
    prec: &dyn Preconditioner,
    cfg: &KrylovConfig,
    enclosed: bool,
) -> Result<LinearSolution, SaddleError> {
    let nu = sys.a.nrows();
    let rhs: Vec<f64> = sys.rhs_u.iter().chain(&sys.rhs_p).map(|v| -v).collect();
    let mut x = vec![0.0; rhs.len()];
    let op = SaddleOperator::new(sys);
    let mp = &sys.mp;
    let project = move |v: &mut [f64]| project_mean(mp, &mut v[nu..]);
    let gcfg = GmresConfig::new(cfg.max_iterations, cfg.atol, cfg.rtol).flexible(cfg.restart);
    let outcome = gmres(
        &op,
        prec,
        &rhs,
        &mut x,
        &gcfg,
        if enclosed { Some(&project) } else { None },
    )?;
    if enclosed {
        project_mean(mp, &mut x[nu..]);
    }
    if !outcome.converged {
        return Err(SaddleError::NotConverged {
            iterations: outcome.iterations,
            final_residual: outcome.residuals.last().copied().unwrap_or(f64::NAN),
            residuals: outcome.residuals,
        });
    }
    let dp = x.split_off(nu);
    Ok(LinearSolution { du: x, dp, outcome })
}
