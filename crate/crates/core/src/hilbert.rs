//! Three-level Hilbert-space primitives: the bare Hamiltonian, its exact
//! propagator, the pulse unitary and density-matrix bookkeeping.
//!
//! Levels are labelled 1, 2, 3 in the physics and stored at matrix indices
//! 0, 1, 2. Units have ħ = 1.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;
pub type Op3 = Matrix3<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

const I: C64 = C64::new(0.0, 1.0);

/// Physical constants of the model: the 1–2 coupling `delta` (Δ), the
/// half-gap `deps` (δε = (ε₁ − ε₂)/2) and the mean pulse rate `lambda` (λ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    delta: f64,
    deps: f64,
    lambda: f64,
}

impl SystemParams {
    pub fn new(delta: f64, deps: f64, lambda: f64) -> Result<Self> {
        if !delta.is_finite() {
            return Err(invalid("delta", format!("must be finite, got {delta}")));
        }
        if !deps.is_finite() {
            return Err(invalid("deps", format!("must be finite, got {deps}")));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { delta, deps, lambda })
    }

    /// Builds parameters from the two level energies. Only their difference
    /// matters; the mean energy is a global phase and is dropped.
    pub fn from_level_energies(eps1: f64, eps2: f64, delta: f64, lambda: f64) -> Result<Self> {
        Self::new(delta, 0.5 * (eps1 - eps2), lambda)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn deps(&self) -> f64 {
        self.deps
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Generalized Rabi frequency ω = √(δε² + Δ²).
    pub fn omega(&self) -> f64 {
        self.deps.hypot(self.delta)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.delta, self.deps, lambda)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(delta, self.deps, self.lambda)
    }
}

impl fmt::Display for SystemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Δ={}, δε={}, λ={}",
            self.delta, self.deps, self.lambda
        )
    }
}

/// Pulse strength θ, reduced into [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseStrength(f64);

impl PulseStrength {
    pub fn new(theta: f64) -> Self {
        let t = theta.rem_euclid(TAU);
        // rem_euclid can round up to exactly TAU for tiny negative inputs
        Self(if t >= TAU { 0.0 } else { t })
    }

    pub fn theta(&self) -> f64 {
        self.0
    }
}

/// A 3×3 Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Op3);

impl DensityMatrix {
    /// Validates all three invariants.
    pub fn new(m: Op3) -> Result<Self> {
        check_state(&m)?;
        Ok(Self(m))
    }

    /// Wraps a matrix without validation. Callers that produce states by
    /// construction (unitary conjugation, propagation) use this and assert
    /// separately.
    pub(crate) fn new_unchecked(m: Op3) -> Self {
        Self(m)
    }

    /// |k⟩⟨k| for level k ∈ {1, 2, 3}.
    pub fn pure_level(level: usize) -> Result<Self> {
        if !(1..=3).contains(&level) {
            return Err(invalid("level", format!("must be 1, 2 or 3, got {level}")));
        }
        let mut m = Op3::zeros();
        m[(level - 1, level - 1)] = C64::new(1.0, 0.0);
        Ok(Self(m))
    }

    pub fn maximally_mixed() -> Self {
        Self(Op3::identity() / C64::new(3.0, 0.0))
    }

    pub fn from_pure(psi: &nalgebra::Vector3<C64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = psi / C64::new(norm, 0.0);
        Self::new(v * v.adjoint())
    }

    pub fn matrix(&self) -> &Op3 {
        &self.0
    }

    pub fn into_matrix(self) -> Op3 {
        self.0
    }

    /// Diagonal entries (P₁, P₂, P₃).
    pub fn populations(&self) -> [f64; 3] {
        [self.0[(0, 0)].re, self.0[(1, 1)].re, self.0[(2, 2)].re]
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Tr(ρ²).
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn check(&self) -> Result<()> {
        check_state(&self.0)
    }
}

fn check_state(m: &Op3) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidState("non-finite entry".into()));
    }
    for i in 0..3 {
        for j in 0..3 {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > HERMITIAN_TOL {
                return Err(Error::InvalidState(format!(
                    "not Hermitian: |ρ[{i}][{j}] - conj(ρ[{j}][{i}])| = {d:e}"
                )));
            }
        }
    }
    let tr = m.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
        return Err(Error::InvalidState(format!("trace = {tr}, expected 1")));
    }
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let min_eig = SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_TOL {
        return Err(Error::InvalidState(format!(
            "not positive semidefinite: smallest eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

/// H₀ = [[δε, Δ, 0], [Δ, −δε, 0], [0, 0, 0]].
pub fn build_h0(params: &SystemParams) -> Op3 {
    let d = C64::new(params.delta(), 0.0);
    let e = C64::new(params.deps(), 0.0);
    let z = C64::new(0.0, 0.0);
    Op3::new(e, d, z, d, -e, z, z, z, z)
}

/// Exact e^{−iH₀τ}: on levels {1,2} this is cos(ωτ)I − i sin(ωτ)(δε σ_z + Δ σ_x)/ω,
/// level 3 is left alone.
pub fn unitary_propagator(params: &SystemParams, tau: f64) -> Op3 {
    let omega = params.omega();
    if omega == 0.0 {
        return Op3::identity();
    }
    let (sin, cos) = (omega * tau).sin_cos();
    let a = params.deps() / omega;
    let b = params.delta() / omega;
    let c = C64::new(cos, 0.0);
    let zero = C64::new(0.0, 0.0);
    let off = -I * (sin * b);
    Op3::new(
        c - I * (sin * a),
        off,
        zero,
        off,
        c + I * (sin * a),
        zero,
        zero,
        zero,
        C64::new(1.0, 0.0),
    )
}

/// e^{−iθS} with S = |2⟩⟨3| + |3⟩⟨2|, i.e. diag(1, cos θ, cos θ) − i sin θ S.
pub fn pulse_operator(theta: PulseStrength) -> Op3 {
    pulse_operator_raw(theta.theta())
}

pub(crate) fn pulse_operator_raw(theta: f64) -> Op3 {
    let (sin, cos) = theta.sin_cos();
    let c = C64::new(cos, 0.0);
    let off = -I * sin;
    let zero = C64::new(0.0, 0.0);
    Op3::new(
        C64::new(1.0, 0.0),
        zero,
        zero,
        zero,
        c,
        off,
        zero,
        off,
        c,
    )
}

/// The S operator coupling levels 2 and 3.
pub fn pulse_generator() -> Op3 {
    let mut s = Op3::zeros();
    s[(1, 2)] = C64::new(1.0, 0.0);
    s[(2, 1)] = C64::new(1.0, 0.0);
    s
}

/// U ρ U†.
pub fn conjugate(rho: &DensityMatrix, u: &Op3) -> DensityMatrix {
    DensityMatrix::new_unchecked(u * rho.matrix() * u.adjoint())
}

/// A ρ A† for A = e^{−iθS}.
pub fn apply_pulse(rho: &DensityMatrix, theta: PulseStrength) -> DensityMatrix {
    conjugate(rho, &pulse_operator(theta))
}

/// |⟨k|ψ⟩|² for each level.
pub fn populations_of(psi: &nalgebra::Vector3<C64>) -> [f64; 3] {
    [psi[0].norm_sqr(), psi[1].norm_sqr(), psi[2].norm_sqr()]
}
