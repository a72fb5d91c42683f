//! Right-preconditioned restarted GMRES and its flexible variant.

use super::{axpy, dot, norm2, CsrMatrix, DenseLu, LinalgError};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl Preconditioner for DenseLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }
}

#[derive(Clone, Debug)]
pub struct GmresConfig {
    pub max_iterations: usize,
    pub restart: usize,
    pub atol: f64,
    pub rtol: f64,
    /// Store preconditioned directions so the preconditioner may change between iterations.
    pub flexible: bool,
    /// Run exactly `max_iterations` iterations without a convergence test.
    pub fixed_iterations: bool,
}

impl GmresConfig {
    pub fn new(max_iterations: usize, atol: f64, rtol: f64) -> Self {
        GmresConfig {
            max_iterations,
            restart: max_iterations.clamp(1, 100),
            atol,
            rtol,
            flexible: false,
            fixed_iterations: false,
        }
    }

    pub fn flexible(mut self, restart: usize) -> Self {
        self.flexible = true;
        self.restart = restart.max(1);
        self
    }

    /// Exactly `k` iterations, no tolerance test.
    pub fn fixed(k: usize) -> Self {
        GmresConfig {
            max_iterations: k,
            restart: k.max(1),
            atol: 0.0,
            rtol: 0.0,
            flexible: false,
            fixed_iterations: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// Residual norm estimate before the first iteration and after each iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solve `A x = b` with right-preconditioned GMRES, updating `x` in place.
///
/// `project`, if given, is applied to every preconditioned vector and to the
/// final iterate (e.g. removal of a constant pressure mode).
#[allow(clippy::type_complexity)]
pub fn gmres(
    op: &dyn LinearOperator,
    prec: &dyn Preconditioner,
    b: &[f64],
    x: &mut [f64],
    cfg: &GmresConfig,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Result<GmresOutcome, LinalgError> {
    let n = op.dim();
    if b.len() != n || x.len() != n {
        return Err(LinalgError::Dimension {
            expected: n,
            found: b.len().min(x.len()),
        });
    }
    let m = cfg.restart.max(1);
    let mut out = GmresOutcome::default();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut target = 0.0;

    loop {
        op.apply(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm2(&r);
        if out.residuals.is_empty() {
            out.residuals.push(beta);
            target = cfg.atol.max(cfg.rtol * beta);
        }
        if beta == 0.0 || (!cfg.fixed_iterations && beta <= target) {
            out.converged = true;
            return Ok(out);
        }
        if out.iterations >= cfg.max_iterations {
            return Ok(out);
        }

        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::new();
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut done = false;
        while k < m && out.iterations < cfg.max_iterations {
            let mut zk = vec![0.0; n];
            prec.apply(&v[k], &mut zk);
            if let Some(p) = project {
                p(&mut zk);
            }
            op.apply(&zk, &mut w);
            if cfg.flexible {
                z.push(zk);
            }
            for i in 0..=k {
                let hik = dot(&w, &v[i]);
                h[i][k] = hik;
                axpy(-hik, &v[i], &mut w);
            }
            let hnext = norm2(&w);
            h[k + 1][k] = hnext;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c * h[k][k] + s * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            k += 1;
            out.iterations += 1;
            let res = g[k].abs();
            out.residuals.push(res);
            if hnext == 0.0 {
                done = true;
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
            if !cfg.fixed_iterations && res <= target {
                done = true;
                break;
            }
        }

        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            if h[i][i] == 0.0 {
                return Err(LinalgError::Breakdown(out.iterations));
            }
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        if cfg.flexible {
            for (i, yi) in y.iter().enumerate() {
                axpy(*yi, &z[i], x);
            }
        } else {
            let mut u = vec![0.0; n];
            for (i, yi) in y.iter().enumerate() {
                axpy(*yi, &v[i], &mut u);
            }
            let mut zu = vec![0.0; n];
            prec.apply(&u, &mut zu);
            if let Some(p) = project {
                p(&mut zu);
            }
            axpy(1.0, &zu, x);
        }
        if done {
            // tolerance reached or the Krylov space became invariant
            out.converged = true;
            return Ok(out);
        }
        if out.iterations >= cfg.max_iterations {
            out.converged = cfg.fixed_iterations;
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.1 * i as f64));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn identity_converges_in_one() {
        let a = CsrMatrix::identity(5);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let mut x = vec![0.0; 5];
        let out = gmres(&a, &Identity, &b, &mut x, &GmresConfig::new(10, 1e-12, 1e-12), None).unwrap();
        assert_eq!(out.iterations, 1);
        for (p, q) in x.iter().zip(&b) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let n = 10;
        let a = tridiag(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut x = vec![0.0; n];
        let out = gmres(&a, &Identity, &b, &mut x, &GmresConfig::new(10, 0.0, 1e-13), None).unwrap();
        assert!(out.iterations <= 10);
        let exact = DenseLu::factor(n, a.to_dense()).unwrap().solve(&b);
        let scale = norm2(&exact);
        for (p, q) in x.iter().zip(&exact) {
            assert!((p - q).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn exact_preconditioner_one_iteration() {
        let n = 12;
        let a = tridiag(n);
        let lu = DenseLu::factor(n, a.to_dense()).unwrap();
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let out = gmres(&a, &lu, &b, &mut x, &GmresConfig::new(5, 0.0, 1e-10), None).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
    }

    struct Varying {
        calls: Cell<usize>,
    }

    impl Preconditioner for Varying {
        fn apply(&self, r: &[f64], z: &mut [f64]) {
            let k = self.calls.get();
            self.calls.set(k + 1);
            let s = 1.0 / (1.0 + (k % 3) as f64);
            for (i, (zi, ri)) in z.iter_mut().zip(r).enumerate() {
                *zi = s * ri / (2.0 + 0.1 * i as f64);
            }
        }
    }

    #[test]
    fn flexible_residuals_monotone_with_varying_preconditioner() {
        let n = 30;
        let a = tridiag(n);
        let b: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let p = Varying { calls: Cell::new(0) };
        let cfg = GmresConfig::new(60, 0.0, 1e-10).flexible(100);
        let out = gmres(&a, &p, &b, &mut x, &cfg, None).unwrap();
        assert!(out.converged);
        for w in out.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(ax, bi)| bi - ax).collect();
        assert!(norm2(&r) <= 1e-9 * norm2(&b));
    }

    #[test]
    fn restarted_residuals_monotone() {
        let n = 40;
        let a = tridiag(n);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let mut cfg = GmresConfig::new(200, 0.0, 1e-10);
        cfg.restart = 5;
        let out = gmres(&a, &Identity, &b, &mut x, &cfg, None).unwrap();
        assert!(out.converged);
        for w in out.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10));
        }
    }

    #[test]
    fn fixed_iterations_run_to_count() {
        let a = tridiag(20);
        let b = vec![1.0; 20];
        let mut x = vec![0.0; 20];
        let out = gmres(&a, &Identity, &b, &mut x, &GmresConfig::fixed(3), None).unwrap();
        assert_eq!(out.iterations, 3);
    }

    #[test]
    fn zero_rhs_zero_iterations() {
        let a = tridiag(4);
        let mut x = vec![0.0; 4];
        let out = gmres(&a, &Identity, &[0.0; 4], &mut x, &GmresConfig::new(10, 1e-10, 1e-6), None).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
