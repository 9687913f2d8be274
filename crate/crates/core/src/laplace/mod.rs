//! Laplace-domain solution for the populations.
//!
//! With s' = s + λ and ω² = δε² + Δ², the free resolvent G = [s' + iH₀^×]⁻¹
//! has, on the population block,
//!
//! (11|G|11) = (22|G|22) = [s'² + 2(ω² + δε²)] / (s'[s'² + 4ω²])
//! (11|G|22) = (22|G|11) = 2Δ² / (s'[s'² + 4ω²])
//!
//! Ũ₀ = [s' + iH₀^× − λT₁]⁻¹ resums the (11|T₁|11) = 1 return, and the ΔT
//! couplings within {22, 33} are then summed as a geometric series to give
//! P̃₁(s).

mod poly;
mod rational;
mod talbot;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hilbert::{SystemParams, C64};
use crate::linalg;
use crate::liouville::{h0_cross, t_averaged, LiouvilleBasis, SuperOp, DIM};

pub use poly::Poly;
pub use rational::{
    build_rational_p1, build_rational_p2, build_rational_p3, invert_residues, PoleResidueForm,
    PoleTerm, RationalLaplaceFn, CLUSTER_TOL, CANCEL_TOL,
};
pub use talbot::{invert_talbot, invert_talbot_grid, TalbotConfig, DEFAULT_TALBOT_NODES};

/// Relative size below which a denominator is treated as zero.
pub const POLE_GUARD: f64 = 1e-13;

/// Population-block matrix elements addressed by the Laplace closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Element {
    /// (11|·|11)
    E11_11,
    /// (11|·|22)
    E11_22,
    /// (22|·|11)
    E22_11,
    /// (22|·|22)
    E22_22,
    /// (33|·|33)
    E33_33,
}

impl Element {
    pub const ALL: [Element; 5] = [
        Element::E11_11,
        Element::E11_22,
        Element::E22_11,
        Element::E22_22,
        Element::E33_33,
    ];

    /// (row, column) labels in the Liouville basis.
    pub fn labels(self) -> ((usize, usize), (usize, usize)) {
        match self {
            Element::E11_11 => ((1, 1), (1, 1)),
            Element::E11_22 => ((1, 1), (2, 2)),
            Element::E22_11 => ((2, 2), (1, 1)),
            Element::E22_22 => ((2, 2), (2, 2)),
            Element::E33_33 => ((3, 3), (3, 3)),
        }
    }
}

fn guard(value: C64, scale: f64, what: &'static str, s: C64) -> Result<C64> {
    if !value.re.is_finite() || !value.im.is_finite() || value.norm() <= POLE_GUARD * scale {
        return Err(Error::Pole { what, s });
    }
    Ok(value)
}

fn check_s(s: C64) -> Result<()> {
    if !s.re.is_finite() || !s.im.is_finite() {
        return Err(crate::error::invalid("s", format!("must be finite, got {s}")));
    }
    Ok(())
}

struct FreeParts {
    sp: C64,
    g11: C64,
    g12: C64,
}

fn free_parts(params: &SystemParams, s: C64) -> Result<FreeParts> {
    check_s(s)?;
    let (de, d, lam) = (params.deps(), params.delta(), params.lambda());
    let w2 = de * de + d * d;
    let sp = s + lam;
    let q = sp * sp + 4.0 * w2;
    let den = sp * q;
    let r = sp.norm();
    guard(den, r * (r * r + 4.0 * w2), "the free resolvent G", s)?;
    let g11 = (sp * sp + 2.0 * (w2 + de * de)) / den;
    let g12 = C64::new(2.0 * d * d, 0.0) / den;
    Ok(FreeParts { sp, g11, g12 })
}

/// Closed-form elements of the free resolvent G = [(s+λ) + iH₀^×]⁻¹.
pub fn g_element(which: Element, params: &SystemParams, s: C64) -> Result<C64> {
    let f = free_parts(params, s)?;
    Ok(match which {
        Element::E11_11 | Element::E22_22 => f.g11,
        Element::E11_22 | Element::E22_11 => f.g12,
        Element::E33_33 => C64::new(1.0, 0.0) / f.sp,
    })
}

struct ResummedParts {
    sp: C64,
    u11: C64,
    u12: C64,
    u22: C64,
}

fn resummed_parts(params: &SystemParams, s: C64) -> Result<ResummedParts> {
    let f = free_parts(params, s)?;
    let lam = params.lambda();
    let lg = lam * f.g11;
    let a = guard(C64::new(1.0, 0.0) - lg, 1.0 + lg.norm(), "1 - λ(11|G|11)", s)?;
    Ok(ResummedParts {
        sp: f.sp,
        u11: f.g11 / a,
        u12: f.g12 / a,
        u22: f.g11 + lam * f.g12 * f.g12 / a,
    })
}

/// Elements of Ũ₀(s) = [(s+λ) + iH₀^× − λT₁]⁻¹.
pub fn u0_element(which: Element, params: &SystemParams, s: C64) -> Result<C64> {
    let u = resummed_parts(params, s)?;
    Ok(match which {
        Element::E11_11 => u.u11,
        Element::E11_22 | Element::E22_11 => u.u12,
        Element::E22_22 => u.u22,
        Element::E33_33 => C64::new(1.0, 0.0) / u.sp,
    })
}

/// Laplace transforms of the three populations starting from |1⟩⟨1|.
/// The first entry is P̃₁(s):
///
/// P̃₁ = (11|Ũ₀|11) + (λ/2)(11|Ũ₀|22)(22|Ũ₀|11) / [1 − (λ/2)((22|Ũ₀|22) + 1/(s+λ))]
///
/// P̃₂ and P̃₃ follow from the same geometric series, ending on |22) and |33).
pub fn populations_laplace(params: &SystemParams, s: C64) -> Result<[C64; 3]> {
    let u = resummed_parts(params, s)?;
    let half = 0.5 * params.lambda();
    let u33 = C64::new(1.0, 0.0) / u.sp;
    let x = half * (u.u22 + u33);
    let b = guard(C64::new(1.0, 0.0) - x, 1.0 + x.norm(), "the ΔT resummation", s)?;
    let p1 = u.u11 + half * u.u12 * u.u12 / b;
    let p2 = u.u12 + half * u.u22 * u.u12 / b;
    let p3 = half * u33 * u.u12 / b;
    Ok([p1, p2, p3])
}

pub fn p1_laplace(params: &SystemParams, s: C64) -> Result<C64> {
    Ok(populations_laplace(params, s)?[0])
}

fn resolvent_system(params: &SystemParams, s: C64, with_delta_t: bool) -> nalgebra::DMatrix<C64> {
    let lam = params.lambda();
    let mut t = t_averaged();
    if !with_delta_t {
        let mut t1 = SuperOp::zeros().matrix().to_owned();
        let i = LiouvilleBasis::index(1, 1);
        t1[(i, i)] = t.matrix()[(i, i)];
        t = SuperOp::from_matrix(t1);
    }
    let m = SuperOp::identity() * (s + lam) + h0_cross(params) * C64::new(0.0, 1.0) - t * lam;
    m.to_dmatrix()
}

fn resolvent_column(
    params: &SystemParams,
    s: C64,
    col: (usize, usize),
    with_delta_t: bool,
) -> Result<DVector<C64>> {
    check_s(s)?;
    let a = resolvent_system(params, s, with_delta_t);
    let mut b = DVector::zeros(DIM);
    b[LiouvilleBasis::index(col.0, col.1)] = C64::new(1.0, 0.0);
    let x = linalg::solve(&a, &b).map_err(|_| Error::Pole {
        what: "the 9×9 resolvent",
        s,
    })?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Pole {
            what: "the 9×9 resolvent",
            s,
        });
    }
    Ok(x)
}

/// Populations of [(s+λ)I + iH₀^× − λ(T)_av]⁻¹ |11), by a direct 9×9 solve.
pub fn resolvent_populations(params: &SystemParams, s: C64) -> Result<[C64; 3]> {
    let x = resolvent_column(params, s, (1, 1), true)?;
    let [a, b, c] = LiouvilleBasis::POPULATIONS;
    Ok([x[a], x[b], x[c]])
}

pub fn resolvent_p1(params: &SystemParams, s: C64) -> Result<C64> {
    Ok(resolvent_populations(params, s)?[0])
}

/// An element of Ũ₀(s) by a direct 9×9 solve, for checking the closed forms.
pub fn resolvent_u0_element(which: Element, params: &SystemParams, s: C64) -> Result<C64> {
    let (row, col) = which.labels();
    let x = resolvent_column(params, s, col, false)?;
    Ok(x[LiouvilleBasis::index(row.0, row.1)])
}
