//! Dense complex polynomials in the Laplace variable, coefficients stored in
//! ascending degree.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<C64>,
}

impl Poly {
    /// Trailing (highest-degree) exact zeros are dropped.
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == C64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    pub fn constant(c: C64) -> Self {
        Self::new(vec![c])
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    /// s − a
    pub fn linear_root(a: C64) -> Self {
        Self::new(vec![-a, C64::new(1.0, 0.0)])
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> C64 {
        self.coeffs.last().copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, s: C64) -> C64 {
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// Σ |cₖ| |s|ᵏ, the natural scale against which |p(s)| is judged small.
    pub fn eval_abs_scale(&self, s: C64) -> f64 {
        let r = s.norm();
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn scale(&self, k: C64) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * k).collect())
    }

    /// Coefficients (highest first) scaled so the leading one is 1.
    pub fn monic(&self) -> Self {
        let lead = self.leading();
        if lead == C64::new(0.0, 0.0) {
            return self.clone();
        }
        let mut out = self.scale(C64::new(1.0, 0.0) / lead);
        if let Some(last) = out.coeffs.last_mut() {
            *last = C64::new(1.0, 0.0);
        }
        out
    }

    /// Drops highest-degree coefficients below `tol · max|cₖ|`.
    pub fn trim(&self, tol: f64) -> Self {
        let cut = tol * self.max_abs_coeff();
        let mut coeffs = self.coeffs.clone();
        while coeffs.last().is_some_and(|c| c.norm() <= cut) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    /// Number of lowest-degree coefficients below `tol · max|cₖ|` (the
    /// multiplicity of the root at 0, up to tolerance).
    pub fn low_order_zeros(&self, tol: f64) -> usize {
        let cut = tol * self.max_abs_coeff();
        self.coeffs
            .iter()
            .take(self.coeffs.len().saturating_sub(1))
            .take_while(|c| c.norm() <= cut)
            .count()
    }

    /// Divides by sᵏ, discarding the k lowest coefficients.
    pub fn shift_down(&self, k: usize) -> Self {
        Self::new(self.coeffs.iter().skip(k).copied().collect())
    }

    /// Long division: `self = q · divisor + r` with deg r < deg divisor.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        assert!(!divisor.is_zero(), "division by the zero polynomial");
        let n = self.coeffs.len();
        let m = divisor.coeffs.len();
        if n < m {
            return (Poly::zero(), self.clone());
        }
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        let mut q = vec![C64::new(0.0, 0.0); n - m + 1];
        for k in (0..=n - m).rev() {
            let c = rem[k + m - 1] / lead;
            q[k] = c;
            for j in 0..m {
                rem[k + j] -= c * divisor.coeffs[j];
            }
            rem[k + m - 1] = C64::new(0.0, 0.0);
        }
        rem.truncate(m - 1);
        (Poly::new(q), Poly::new(rem))
    }

    /// Division by (s − a), discarding the remainder.
    pub fn deflate(&self, a: C64) -> Poly {
        let n = self.coeffs.len();
        if n <= 1 {
            return Poly::zero();
        }
        let mut q = vec![C64::new(0.0, 0.0); n - 1];
        let mut carry = C64::new(0.0, 0.0);
        for k in (1..n).rev() {
            carry = self.coeffs[k] + carry * a;
            q[k - 1] = carry;
        }
        Poly::new(q)
    }

    /// Coefficients of u ↦ p(a + u).
    pub fn taylor_shift(&self, a: C64) -> Poly {
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for k in (i..n.saturating_sub(1)).rev() {
                let next = c[k + 1];
                c[k] += a * next;
            }
        }
        Poly::new(c)
    }

    /// Roots from the eigenvalues of the companion matrix, each refined by a
    /// few Newton steps on the original polynomial.
    pub fn roots(&self) -> Result<Vec<C64>> {
        let p = self.trim(0.0);
        let n = p.degree();
        if p.is_zero() || n == 0 {
            return Ok(Vec::new());
        }
        let monic = p.monic();
        let mut companion = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            companion[(0, j)] = -monic.coeffs[n - 1 - j];
        }
        for i in 1..n {
            companion[(i, i - 1)] = C64::new(1.0, 0.0);
        }
        let raw = linalg::eigenvalues(&companion).map_err(|_| Error::RootFinder { degree: n })?;
        let dp = p.derivative();
        let roots = raw
            .into_iter()
            .map(|z0| {
                let mut z = z0;
                let mut best = p.eval(z).norm();
                for _ in 0..4 {
                    let d = dp.eval(z);
                    if d.norm() == 0.0 {
                        break;
                    }
                    let cand = z - p.eval(z) / d;
                    let val = p.eval(cand).norm();
                    if !(val < best) {
                        break;
                    }
                    z = cand;
                    best = val;
                }
                z
            })
            .collect::<Vec<_>>();
        if roots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::RootFinder { degree: n });
        }
        Ok(roots)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = C64::new(0.0, 0.0);
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(zero)
                        + rhs.coeffs.get(k).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

impl Mul<f64> for &Poly {
    type Output = Poly;
    fn mul(self, rhs: f64) -> Poly {
        self.scale(C64::new(rhs, 0.0))
    }
}
