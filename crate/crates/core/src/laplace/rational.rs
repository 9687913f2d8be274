//! Rational transforms and their exact inversion by partial fractions.

use super::poly::Poly;
use super::POLE_GUARD;
use crate::error::{Error, Result};
use crate::hilbert::{SystemParams, C64};

/// Root coincidence tolerance when cancelling common factors.
pub const CANCEL_TOL: f64 = 1e-10;

/// Distinct poles closer than this (relative to max(1, |p|)) make residue
/// extraction ill-conditioned.
pub const CLUSTER_TOL: f64 = 1e-8;

/// Computed roots of an m-fold root spread like ε^{1/m}; roots this close
/// are tested as one multiple root.
const GROUP_RADIUS: f64 = 1e-3;

/// A group of m roots is one m-fold root when the first m Taylor
/// coefficients of the denominator at their centroid vanish to this
/// tolerance, relative to the largest coefficient.
const MULTIPLE_ROOT_TOL: f64 = 1e-10;

const IMAG_TOL: f64 = 1e-9;

/// N(s)/D(s) with the denominator normalized to be monic.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalLaplaceFn {
    numerator: Poly,
    denominator: Poly,
}

impl RationalLaplaceFn {
    pub fn new(numerator: Poly, denominator: Poly) -> Result<Self> {
        if denominator.is_zero() {
            return Err(crate::error::invalid(
                "denominator",
                "must not be identically zero",
            ));
        }
        let lead = denominator.leading();
        Ok(Self {
            numerator: numerator.scale(C64::new(1.0, 0.0) / lead),
            denominator: denominator.monic(),
        })
    }

    pub fn numerator(&self) -> &Poly {
        &self.numerator
    }

    pub fn denominator(&self) -> &Poly {
        &self.denominator
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.numerator.is_zero() || self.numerator.degree() < self.denominator.degree()
    }

    pub fn eval(&self, s: C64) -> Result<C64> {
        let d = self.denominator.eval(s);
        let scale = self.denominator.eval_abs_scale(C64::new(s.norm().max(1.0), 0.0));
        if d.norm() <= POLE_GUARD * scale {
            return Err(Error::Pole {
                what: "the rational transform",
                s,
            });
        }
        Ok(self.numerator.eval(s) / d)
    }

    /// Divides numerator and denominator by a known common factor when both
    /// remainders vanish to rounding; otherwise leaves the function alone.
    pub(crate) fn divide_common(&self, factor: &Poly) -> Self {
        let (qn, rn) = self.numerator.div_rem(factor);
        let (qd, rd) = self.denominator.div_rem(factor);
        let small = |r: &Poly, p: &Poly| r.max_abs_coeff() <= 1e-12 * p.max_abs_coeff().max(1e-300);
        if small(&rn, &self.numerator) && small(&rd, &self.denominator) && !qd.is_zero() {
            Self::new(qn, qd).unwrap_or_else(|_| self.clone())
        } else {
            self.clone()
        }
    }

    /// Removes common factors: powers of s whose coefficients vanish to
    /// tolerance, then numerator roots at which the denominator also
    /// vanishes to [`CANCEL_TOL`].
    pub fn reduce(&self) -> Self {
        let mut cur = self.strip_common_s();
        loop {
            let next = cur.cancel_one_root();
            match next {
                Some(f) => cur = f.strip_common_s(),
                None => return cur,
            }
        }
    }

    fn strip_common_s(&self) -> Self {
        if self.numerator.is_zero() {
            return self.clone();
        }
        let k = self
            .numerator
            .low_order_zeros(CANCEL_TOL)
            .min(self.denominator.low_order_zeros(CANCEL_TOL));
        if k == 0 {
            return self.clone();
        }
        Self {
            numerator: self.numerator.shift_down(k),
            denominator: self.denominator.shift_down(k).monic(),
        }
    }

    fn cancel_one_root(&self) -> Option<Self> {
        if self.numerator.degree() == 0 || self.denominator.degree() == 0 {
            return None;
        }
        let roots = self.numerator.roots().ok()?;
        for r in roots {
            let d = self.denominator.eval(r);
            if d.norm() <= CANCEL_TOL * self.denominator.eval_abs_scale(r) {
                return Some(Self {
                    numerator: self.numerator.deflate(r),
                    denominator: self.denominator.deflate(r).monic(),
                });
            }
        }
        None
    }

    pub fn to_pole_residue(&self) -> Result<PoleResidueForm> {
        if !self.is_strictly_proper() {
            return Err(Error::NotStrictlyProper {
                num: self.numerator.degree(),
                den: self.denominator.degree(),
            });
        }
        let roots = self.denominator.roots()?;
        let dp = self.denominator.derivative();
        let mut terms = Vec::with_capacity(roots.len());
        for group in group_roots(&roots) {
            let m = group.len();
            if m > 1 {
                let center = group.iter().sum::<C64>() / m as f64;
                if let Some((pole, residues)) = self.multiple_pole_residues(center, m) {
                    terms.push(PoleTerm {
                        pole,
                        multiplicity: m,
                        residues,
                    });
                    continue;
                }
                for (i, &a) in group.iter().enumerate() {
                    for &b in &group[i + 1..] {
                        if (a - b).norm() <= CLUSTER_TOL * a.norm().max(b.norm()).max(1.0) {
                            return Err(Error::IllConditionedResidues {
                                a,
                                b,
                                tol: CLUSTER_TOL,
                            });
                        }
                    }
                }
            }
            for p in group {
                terms.push(PoleTerm {
                    pole: p,
                    multiplicity: 1,
                    residues: vec![self.numerator.eval(p) / dp.eval(p)],
                });
            }
        }
        Ok(PoleResidueForm { terms })
    }

    /// Laurent coefficients at a pole of order m: with D = (s−c)^m R and
    /// h(u) = N(c+u)/R(c+u) = Σ hⱼ uʲ, the term hⱼ u^{j−m} inverts to
    /// hⱼ t^{m−1−j}/(m−1−j)! e^{ct}. Returns the weight of tᵏ/k! at index k,
    /// or None when the group does not look like a genuine multiple root.
    /// The pole location is refined first.
    fn multiple_pole_residues(&self, c0: C64, m: usize) -> Option<(C64, Vec<C64>)> {
        // an m-fold root of D is a simple root of its (m−1)-th derivative
        let mut lower = self.denominator.clone();
        for _ in 1..m {
            lower = lower.derivative();
        }
        let upper = lower.derivative();
        let mut c = c0;
        for _ in 0..3 {
            let du = upper.eval(c);
            if du.norm() == 0.0 {
                return None;
            }
            c -= lower.eval(c) / du;
        }
        let shifted = self.denominator.taylor_shift(c);
        let d = shifted.coeffs();
        d.get(m)?;
        let scale = shifted.max_abs_coeff();
        if d[..m].iter().any(|dj| dj.norm() > MULTIPLE_ROOT_TOL * scale) {
            return None;
        }
        let r = Poly::new(d[m..].to_vec());
        let n = self.numerator.taylor_shift(c);
        let zero = C64::new(0.0, 0.0);
        let ncoef = |j: usize| n.coeffs().get(j).copied().unwrap_or(zero);
        let rcoef = |j: usize| r.coeffs().get(j).copied().unwrap_or(zero);
        let r0 = rcoef(0);
        if r0.norm() == 0.0 {
            return None;
        }
        let mut h = Vec::with_capacity(m);
        for j in 0..m {
            let mut acc = ncoef(j);
            for i in 0..j {
                acc -= h[i] * rcoef(j - i);
            }
            h.push(acc / r0);
        }
        Some((c, (0..m).map(|k| h[m - 1 - k]).collect()))
    }
}

/// Single-linkage groups of roots within [`GROUP_RADIUS`] of each other:
/// candidates for one multiple root.
fn group_roots(roots: &[C64]) -> Vec<Vec<C64>> {
    let mut groups: Vec<Vec<C64>> = Vec::new();
    for &r in roots {
        let near = |q: &C64| (q - r).norm() <= GROUP_RADIUS * q.norm().max(r.norm()).max(1.0);
        let hits: Vec<usize> = (0..groups.len())
            .filter(|&g| groups[g].iter().any(near))
            .collect();
        let mut merged = vec![r];
        for &g in hits.iter().rev() {
            merged.extend(groups.remove(g));
        }
        groups.push(merged);
    }
    groups
}

/// One pole of a partial-fraction expansion. `residues[k]` multiplies
/// tᵏ/k! · e^{pole·t} in the time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleTerm {
    pub pole: C64,
    pub multiplicity: usize,
    pub residues: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleResidueForm {
    pub terms: Vec<PoleTerm>,
}

impl PoleResidueForm {
    pub fn poles(&self) -> Vec<C64> {
        self.terms.iter().map(|t| t.pole).collect()
    }

    /// Σ terms at time t, with the sum of term magnitudes as a scale.
    fn eval_with_scale(&self, t: f64) -> (C64, f64) {
        let mut sum = C64::new(0.0, 0.0);
        let mut scale = 0.0;
        for term in &self.terms {
            let e = (term.pole * t).exp();
            let mut tk = 1.0;
            for (k, &r) in term.residues.iter().enumerate() {
                if k > 0 {
                    tk *= t / k as f64;
                }
                let v = r * e * tk;
                sum += v;
                scale += v.norm();
            }
        }
        (sum, scale)
    }

    pub fn eval(&self, t: f64) -> C64 {
        self.eval_with_scale(t).0
    }

    /// All poles in Re ≤ tol.
    pub fn is_stable(&self, tol: f64) -> bool {
        self.terms.iter().all(|t| t.pole.re <= tol)
    }

    /// Every pole has a partner at its conjugate with conjugate residues.
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        self.terms.iter().all(|a| {
            self.terms.iter().any(|b| {
                (a.pole.conj() - b.pole).norm() <= tol * a.pole.norm().max(1.0)
                    && a.residues.len() == b.residues.len()
                    && a.residues.iter().zip(&b.residues).all(|(x, y)| {
                        (x.conj() - y).norm() <= tol * x.norm().max(1.0)
                    })
            })
        })
    }
}

/// f(t) = Σ rₖ tᵏ/k! e^{pt} over the poles of f, for each time in the grid.
pub fn invert_residues(f: &RationalLaplaceFn, t_grid: &[f64]) -> Result<Vec<f64>> {
    if let Some(&t) = t_grid.iter().find(|t| !t.is_finite()) {
        return Err(crate::error::invalid("t_grid", format!("times must be finite, got {t}")));
    }
    let form = f.to_pole_residue()?;
    t_grid
        .iter()
        .map(|&t| {
            let (v, scale) = form.eval_with_scale(t);
            if v.im.abs() > IMAG_TOL * scale.max(1.0) {
                return Err(Error::NonRealInverse { t, imag: v.im });
            }
            Ok(v.re)
        })
        .collect()
}

/// Polynomial pieces of the Laplace closed forms, all in s.
struct Pieces {
    lam: f64,
    /// s + λ
    sp: Poly,
    /// (s+λ)² + 4ω²
    q: Poly,
    /// (s+λ)² + 2(ω² + δε²)
    n11: Poly,
    /// 2Δ²
    n12: Poly,
    /// (s+λ)·q − λ·n11, so that 1 − λ(11|G|11) = e / ((s+λ)q)
    e: Poly,
    /// (s+λ)·q·e times the resummation denominator of P̃₁
    b2: Poly,
}

impl Pieces {
    fn new(params: &SystemParams) -> Self {
        let (d, de, lam) = (params.delta(), params.deps(), params.lambda());
        let w2 = de * de + d * d;
        let sp = Poly::from_real(&[lam, 1.0]);
        let sp2 = &sp * &sp;
        let q = &sp2 + &Poly::from_real(&[4.0 * w2]);
        let n11 = &sp2 + &Poly::from_real(&[2.0 * (w2 + de * de)]);
        let n12 = Poly::from_real(&[2.0 * d * d]);
        let e = &(&sp * &q) - &(&n11 * lam);
        let half = 0.5 * lam;
        // (s+λ)q·e·[1 − (λ/2)(u22 + 1/(s+λ))] with u22 = (n11·e + λ·n12²)/((s+λ)q·e)
        let u22_num = &(&n11 * &e) + &(&(&n12 * &n12) * lam);
        let b2 = &(&(&(&sp * &q) * &e) - &(&u22_num * half)) - &(&(&q * &e) * half);
        Self {
            lam,
            sp,
            q,
            n11,
            n12,
            e,
            b2,
        }
    }

    fn finish(&self, num: Poly, den: Poly) -> RationalLaplaceFn {
        let f = RationalLaplaceFn::new(num, den).expect("denominator is monic in s");
        f.divide_common(&self.q).divide_common(&self.e).reduce()
    }
}

/// P̃₁(s) as an exact ratio of polynomials, common factors cancelled.
pub fn build_rational_p1(params: &SystemParams) -> RationalLaplaceFn {
    let p = Pieces::new(params);
    let half = 0.5 * p.lam;
    let n12sq = &p.n12 * &p.n12;
    let num = &(&p.n11 * &p.b2) + &(&(&(&n12sq * &p.sp) * &p.q) * half);
    let den = &p.e * &p.b2;
    p.finish(num, den)
}

/// P̃₂(s), from the same resummation ending on |22).
pub fn build_rational_p2(params: &SystemParams) -> RationalLaplaceFn {
    let p = Pieces::new(params);
    let half = 0.5 * p.lam;
    let u22_num = &(&p.n11 * &p.e) + &(&(&p.n12 * &p.n12) * p.lam);
    let num = &p.n12 * &(&p.b2 + &(&u22_num * half));
    let den = &p.e * &p.b2;
    p.finish(num, den)
}

/// P̃₃(s), populated only through the ΔT coupling 22 → 33.
pub fn build_rational_p3(params: &SystemParams) -> RationalLaplaceFn {
    let p = Pieces::new(params);
    let num = &(&p.n12 * &p.q) * (0.5 * p.lam);
    p.finish(num, p.b2.clone())
}
