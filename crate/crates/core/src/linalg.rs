//! Dense complex linear algebra used by the Liouville and Laplace layers:
//! a complex Schur decomposition, eigenvectors of the triangular factor,
//! a Padé matrix exponential and a 1-norm condition estimate.

use nalgebra::{DMatrix, DVector, Hessenberg};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Complex Schur form `A = Q T Qᴴ` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct Schur {
    pub q: DMatrix<C64>,
    pub t: DMatrix<C64>,
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }
}

/// Givens rotation `[[c, s], [-conj(s), c]]` mapping `(a, b)` to `(r, 0)`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if na == 0.0 {
        return (0.0, C64::new(1.0, 0.0));
    }
    let n = na.hypot(nb);
    (na / n, (a / na) * b.conj() / n)
}

fn rotate_rows(m: &mut DMatrix<C64>, k: usize, c: f64, s: C64, cols: std::ops::Range<usize>) {
    for j in cols {
        let x = m[(k, j)];
        let y = m[(k + 1, j)];
        m[(k, j)] = x * c + s * y;
        m[(k + 1, j)] = -s.conj() * x + y * c;
    }
}

fn rotate_cols(m: &mut DMatrix<C64>, k: usize, c: f64, s: C64, rows: std::ops::Range<usize>) {
    for i in rows {
        let x = m[(i, k)];
        let y = m[(i, k + 1)];
        m[(i, k)] = x * c + s.conj() * y;
        m[(i, k + 1)] = -s * x + y * c;
    }
}

/// Eigenvalue of the 2×2 block `[[a, b], [c, d]]` closest to `d`.
fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let r1 = d - b * c / (half + disc);
    let r2 = d - b * c / (half - disc);
    let pick = |r: C64| if r.re.is_finite() && r.im.is_finite() { Some(r) } else { None };
    match (pick(r1), pick(r2)) {
        (Some(x), Some(y)) => {
            if (x - d).norm() <= (y - d).norm() {
                x
            } else {
                y
            }
        }
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => d,
    }
}

/// Shifted-QR complex Schur decomposition on the Hessenberg form.
pub fn schur(a: &DMatrix<C64>) -> Result<Schur> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Eigen("matrix is not square".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Schur {
            q: DMatrix::zeros(0, 0),
            t: DMatrix::zeros(0, 0),
        });
    }
    let (mut q, mut h) = if n > 2 {
        Hessenberg::new(a.clone()).unpack()
    } else {
        (DMatrix::identity(n, n), a.clone())
    };
    for i in 2..n {
        for j in 0..i - 1 {
            h[(i, j)] = C64::new(0.0, 0.0);
        }
    }

    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter_since_deflation = 0usize;
    let mut total_iter = 0usize;
    let budget = MAX_SWEEPS_PER_EIGENVALUE * n.max(1);

    while hi > 0 {
        // deflate negligible subdiagonals
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let tiny = if diag == 0.0 { eps * scale } else { eps * diag };
            if sub <= tiny || sub == 0.0 {
                h[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter_since_deflation = 0;
            continue;
        }

        total_iter += 1;
        iter_since_deflation += 1;
        if total_iter > budget {
            return Err(Error::Eigen(format!(
                "QR iteration did not converge after {total_iter} sweeps"
            )));
        }

        let mu = if iter_since_deflation % 11 == 10 {
            // exceptional shift to break cycles
            h[(hi, hi)] + C64::new(0.75 * h[(hi, hi - 1)].norm(), 0.3 * h[(hi, hi - 1)].norm())
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };

        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        let mut rots = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            rotate_rows(&mut h, k, c, s, k..n);
            h[(k + 1, k)] = C64::new(0.0, 0.0);
            rots.push((k, c, s));
        }
        for &(k, c, s) in &rots {
            rotate_cols(&mut h, k, c, s, 0..(k + 2).min(hi + 1));
            rotate_cols(&mut q, k, c, s, 0..n);
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }

    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    Ok(Schur { q, t: h })
}

pub fn eigenvalues(a: &DMatrix<C64>) -> Result<Vec<C64>> {
    Ok(schur(a)?.eigenvalues())
}

/// Right eigenvectors from the Schur form (columns, unit 2-norm), paired
/// with their eigenvalues. Near-coincident diagonal entries are perturbed
/// to keep the back substitution finite; the caller judges the result
/// through the condition number of the eigenvector matrix.
pub fn eigen_decomposition(a: &DMatrix<C64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let Schur { q, t } = schur(a)?;
    let n = t.nrows();
    let tnorm = t.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE * 1e10);
    let mut x = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        x[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for l in j + 1..=k {
                acc += t[(j, l)] * x[(l, k)];
            }
            let mut d = t[(j, j)] - lam;
            if d.norm() < smin {
                d = C64::new(smin, 0.0);
            }
            x[(j, k)] = -acc / d;
        }
    }
    let mut v = q * x;
    for k in 0..n {
        let norm = v.column(k).norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Eigen("degenerate eigenvector".into()));
        }
        v.column_mut(k).unscale_mut(norm);
    }
    Ok(((0..n).map(|i| t[(i, i)]).collect(), v))
}

pub fn norm1(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// κ₁(M) = ‖M‖₁‖M⁻¹‖₁; infinite when M is numerically singular.
pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => {
            let k = norm1(m) * norm1(&inv);
            if k.is_finite() {
                k
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Scaling-and-squaring matrix exponential with the degree-13 Padé approximant.
pub fn expm(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::ExpmNonConvergence("non-finite input".into()));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a = a / C64::new(2f64.powi(squarings as i32), 0.0);
    let id = DMatrix::<C64>::identity(n, n);
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let p = &v + &u;
    let qm = &v - &u;
    let mut r = qm
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::ExpmNonConvergence("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::ExpmNonConvergence("overflow during squaring".into()));
    }
    Ok(r)
}

/// Solves `A x = b`, reporting a singular system instead of returning garbage.
pub fn solve(a: &DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Singular("LU factorization has a zero pivot".into()))?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("solution is not finite".into()));
    }
    Ok(x)
}
