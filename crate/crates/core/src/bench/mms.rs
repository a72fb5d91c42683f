//! Manufactured solution on [0,2]³ with a closed-form body force.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::assembly::VectorField;

/// Polynomial in (x, y) with exponent-keyed coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly2 {
    terms: BTreeMap<(u32, u32), f64>,
}

impl Poly2 {
    pub fn constant(c: f64) -> Self {
        Poly2::monomial(c, 0, 0)
    }

    pub fn monomial(c: f64, i: u32, j: u32) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert((i, j), c);
        }
        Poly2 { terms }
    }

    pub fn x() -> Self {
        Poly2::monomial(1.0, 1, 0)
    }

    pub fn y() -> Self {
        Poly2::monomial(1.0, 0, 1)
    }

    pub fn scale(&self, s: f64) -> Self {
        Poly2 {
            terms: self.terms.iter().map(|(&k, &c)| (k, c * s)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Poly2::constant(1.0), |acc, _| &acc * self)
    }

    pub fn dx(&self) -> Self {
        let mut out = Poly2::default();
        for (&(i, j), &c) in &self.terms {
            if i > 0 {
                out.add_term(i - 1, j, c * i as f64);
            }
        }
        out
    }

    pub fn dy(&self) -> Self {
        let mut out = Poly2::default();
        for (&(i, j), &c) in &self.terms {
            if j > 0 {
                out.add_term(i, j - 1, c * j as f64);
            }
        }
        out
    }

    pub fn laplacian(&self) -> Self {
        &self.dx().dx() + &self.dy().dy()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|(&(i, j), &c)| c * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    }

    /// Exact integral over the rectangle [x0,x1] × [y0,y1].
    pub fn integrate(&self, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> f64 {
        self.terms
            .iter()
            .map(|(&(i, j), &c)| {
                let (a, b) = ((i + 1) as i32, (j + 1) as i32);
                c * (x1.powi(a) - x0.powi(a)) / a as f64 * (y1.powi(b) - y0.powi(b)) / b as f64
            })
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| *c == 0.0)
    }

    fn add_term(&mut self, i: u32, j: u32, c: f64) {
        let e = self.terms.entry((i, j)).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&(i, j));
        }
    }
}

impl Add for &Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        let mut out = self.clone();
        for (&(i, j), &c) in &rhs.terms {
            out.add_term(i, j, c);
        }
        out
    }
}

impl Sub for &Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        self + &(-rhs)
    }
}

impl Neg for &Poly2 {
    type Output = Poly2;
    fn neg(self) -> Poly2 {
        self.scale(-1.0)
    }
}

impl Mul for &Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        let mut out = Poly2::default();
        for (&(i, j), &a) in &self.terms {
            for (&(k, l), &b) in &rhs.terms {
                out.add_term(i + k, j + l, a * b);
            }
        }
        out
    }
}

/// Exact velocity, pressure and body force at one Reynolds number.
#[derive(Clone, Debug)]
pub struct MmsSolution {
    pub re: f64,
    pub nu: f64,
    pub u: [Poly2; 2],
    pub p: Poly2,
    pub f: [Poly2; 2],
}

/// Viscosity of the manufactured problem: characteristic length 2.
pub fn mms_viscosity(re: f64) -> f64 {
    2.0 / re
}

impl MmsSolution {
    pub fn new(re: f64) -> Self {
        let x = Poly2::x();
        let y = Poly2::y();
        let c = Poly2::constant;
        let xm2 = &x - &c(2.0);
        // u1 = 1/4 (x-2)^2 x^2 y (y^2 - 2)
        let u1 = &(&(&xm2.pow(2) * &x.pow(2)) * &y) * &(&y.pow(2) - &c(2.0));
        let u1 = u1.scale(0.25);
        // u2 = -1/4 x (x^2 - 3x + 2) y^2 (y^2 - 4)
        let cubic = &(&x.pow(2) - &x.scale(3.0)) + &c(2.0);
        let u2 = &(&(&x * &cubic) * &y.pow(2)) * &(&y.pow(2) - &c(4.0));
        let u2 = u2.scale(-0.25);

        // viscous part: x y (3x^4 - 15x^3 + 10x^2 y^2 - 30x(y^2-2) + 20(y^2-2)) / (5 Re)
        let y2m2 = &y.pow(2) - &c(2.0);
        let inner = &(&(&(&x.pow(4).scale(3.0) - &x.pow(3).scale(15.0))
            + &(&x.pow(2) * &y.pow(2)).scale(10.0))
            - &(&x * &y2m2).scale(30.0))
            + &y2m2.scale(20.0);
        let visc = (&(&x * &y) * &inner).scale(1.0 / (5.0 * re));
        // convective part: -(1/128) (x-2)^4 x^4 y^2 (y^4 - 2y^2 + 8)
        let quartic = &(&y.pow(4) - &y.pow(2).scale(2.0)) + &c(8.0);
        let conv = (&(&(&xm2.pow(4) * &x.pow(4)) * &y.pow(2)) * &quartic).scale(-1.0 / 128.0);
        let p = &(&visc + &conv) + &c(1408.0 / 33075.0 - 8.0 / (5.0 * re));

        let nu = mms_viscosity(re);
        let force = |ui: &Poly2, dp: Poly2| -> Poly2 {
            let adv = &(&u1 * &ui.dx()) + &(&u2 * &ui.dy());
            &(&ui.laplacian().scale(-nu) + &adv) + &dp
        };
        let f = [force(&u1, p.dx()), force(&u2, p.dy())];
        MmsSolution {
            re,
            nu,
            u: [u1, u2],
            p,
            f,
        }
    }

    pub fn velocity(&self, x: &[f64]) -> [f64; 3] {
        [self.u[0].eval(x[0], x[1]), self.u[1].eval(x[0], x[1]), 0.0]
    }

    pub fn pressure(&self, x: &[f64]) -> f64 {
        self.p.eval(x[0], x[1])
    }

    pub fn velocity_field(&self) -> VectorField {
        let s = self.clone();
        Arc::new(move |x: &[f64]| s.velocity(x))
    }

    pub fn force_field(&self) -> VectorField {
        let s = self.clone();
        Arc::new(move |x: &[f64]| [s.f[0].eval(x[0], x[1]), s.f[1].eval(x[0], x[1]), 0.0])
    }
}
