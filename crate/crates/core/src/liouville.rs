//! Liouville-space algebra for the three-level system.
//!
//! Density matrices are flattened into 9-vectors using the basis ordering
//! (11, 22, 12, 21, 33, 13, 23, 31, 32). With this ordering the commutator
//! superoperator of H₀ splits into a population/coherence block on
//! {11, 22, 12, 21}, an isolated 33 entry, and two 2×2 blocks on {13, 23}
//! and {31, 32}.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::error::{invalid, Error, Result};
use crate::hilbert::{build_h0, pulse_operator_raw, DensityMatrix, Op3, SystemParams, C64};
use crate::linalg;

pub const DIM: usize = 9;

pub type LVec = SVector<C64, DIM>;
pub type LMat = SMatrix<C64, DIM, DIM>;

/// Eigenvector matrices with a larger 1-norm condition number are treated
/// as numerically defective and the propagator switches to Padé.
pub const EIGEN_CONDITION_LIMIT: f64 = 1e8;

/// Fixed ordering of the nine (m₁, m₂) labels. Labels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiouvilleBasis;

impl LiouvilleBasis {
    pub const ORDER: [(usize, usize); DIM] = [
        (1, 1),
        (2, 2),
        (1, 2),
        (2, 1),
        (3, 3),
        (1, 3),
        (2, 3),
        (3, 1),
        (3, 2),
    ];

    /// Position of the label (m₁, m₂) in the ordering.
    pub const fn index(m1: usize, m2: usize) -> usize {
        match (m1, m2) {
            (1, 1) => 0,
            (2, 2) => 1,
            (1, 2) => 2,
            (2, 1) => 3,
            (3, 3) => 4,
            (1, 3) => 5,
            (2, 3) => 6,
            (3, 1) => 7,
            (3, 2) => 8,
            _ => panic!("level labels must be 1, 2 or 3"),
        }
    }

    pub const fn pair(position: usize) -> (usize, usize) {
        Self::ORDER[position]
    }

    /// Positions of the diagonal labels 11, 22, 33.
    pub const POPULATIONS: [usize; 3] = [0, 1, 4];
}

/// A linear map on vectorized 3×3 matrices, in [`LiouvilleBasis`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperOp(LMat);

impl SuperOp {
    pub fn from_matrix(m: LMat) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(LMat::identity())
    }

    pub fn zeros() -> Self {
        Self(LMat::zeros())
    }

    pub fn matrix(&self) -> &LMat {
        &self.0
    }

    /// Element (m₁m₂|X|m₃m₄).
    pub fn get(&self, row: (usize, usize), col: (usize, usize)) -> C64 {
        self.0[(
            LiouvilleBasis::index(row.0, row.1),
            LiouvilleBasis::index(col.0, col.1),
        )]
    }

    pub fn apply(&self, v: &LVec) -> LVec {
        self.0 * v
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_iterator(DIM, DIM, self.0.iter().cloned())
    }
}

impl std::ops::Add for SuperOp {
    type Output = SuperOp;
    fn add(self, rhs: SuperOp) -> SuperOp {
        SuperOp(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SuperOp {
    type Output = SuperOp;
    fn sub(self, rhs: SuperOp) -> SuperOp {
        SuperOp(self.0 - rhs.0)
    }
}

impl std::ops::Mul<C64> for SuperOp {
    type Output = SuperOp;
    fn mul(self, rhs: C64) -> SuperOp {
        SuperOp(self.0 * rhs)
    }
}

impl std::ops::Mul<f64> for SuperOp {
    type Output = SuperOp;
    fn mul(self, rhs: f64) -> SuperOp {
        SuperOp(self.0 * C64::new(rhs, 0.0))
    }
}

/// L = −iH₀^× + λ((T)_av − I), the generator of the averaged dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    op: SuperOp,
    params: SystemParams,
}

impl Generator {
    pub fn superop(&self) -> &SuperOp {
        &self.op
    }

    pub fn matrix(&self) -> &LMat {
        self.op.matrix()
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        linalg::eigenvalues(&self.op.to_dmatrix())
    }
}

pub fn vectorize(rho: &DensityMatrix) -> LVec {
    vectorize_matrix(rho.matrix())
}

pub fn vectorize_matrix(m: &Op3) -> LVec {
    LVec::from_fn(|k, _| {
        let (a, b) = LiouvilleBasis::pair(k);
        m[(a - 1, b - 1)]
    })
}

pub fn devectorize_matrix(v: &LVec) -> Op3 {
    let mut m = Op3::zeros();
    for (k, &(a, b)) in LiouvilleBasis::ORDER.iter().enumerate() {
        m[(a - 1, b - 1)] = v[k];
    }
    m
}

/// Rebuilds a density matrix, validating Hermiticity, trace and positivity.
pub fn devectorize(v: &LVec) -> Result<DensityMatrix> {
    DensityMatrix::new(devectorize_matrix(v))
}

/// The superoperator of ρ ↦ AρB, with element
/// (m₁m₂|X|m₃m₄) = ⟨m₁|A|m₃⟩⟨m₄|B|m₂⟩.
pub fn conjugation_superop(a: &Op3, b: &Op3) -> SuperOp {
    SuperOp(LMat::from_fn(|r, c| {
        let (m1, m2) = LiouvilleBasis::pair(r);
        let (m3, m4) = LiouvilleBasis::pair(c);
        a[(m1 - 1, m3 - 1)] * b[(m4 - 1, m2 - 1)]
    }))
}

/// H₀^×: ρ ↦ [H₀, ρ], element ⟨m₁|H₀|m₃⟩δ_{m₂m₄} − ⟨m₄|H₀|m₂⟩δ_{m₁m₃}.
pub fn h0_cross(params: &SystemParams) -> SuperOp {
    let h = build_h0(params);
    SuperOp(LMat::from_fn(|r, c| {
        let (m1, m2) = LiouvilleBasis::pair(r);
        let (m3, m4) = LiouvilleBasis::pair(c);
        let mut x = C64::new(0.0, 0.0);
        if m2 == m4 {
            x += h[(m1 - 1, m3 - 1)];
        }
        if m1 == m3 {
            x -= h[(m4 - 1, m2 - 1)];
        }
        x
    }))
}

/// (T)_av = T₁ + ΔT: the pulse superoperator averaged over θ uniform in
/// [0, 2π). T₁ has (11|T₁|11) = 1; ΔT has 1/2 on the eight couplings within
/// {22, 33} and within {23, 32}.
pub fn t_averaged() -> SuperOp {
    let mut m = LMat::zeros();
    let half = C64::new(0.5, 0.0);
    m[(LiouvilleBasis::index(1, 1), LiouvilleBasis::index(1, 1))] = C64::new(1.0, 0.0);
    for block in [[(2, 2), (3, 3)], [(2, 3), (3, 2)]] {
        for r in block {
            for c in block {
                m[(LiouvilleBasis::index(r.0, r.1), LiouvilleBasis::index(c.0, c.1))] = half;
            }
        }
    }
    SuperOp(m)
}

/// Pulse superoperator for a single strength θ.
pub fn pulse_superop(theta: f64) -> SuperOp {
    let a = pulse_operator_raw(theta);
    conjugation_superop(&a, &a.adjoint())
}

pub fn generator(params: &SystemParams) -> Generator {
    let lam = params.lambda();
    let op = h0_cross(params) * C64::new(0.0, -1.0) + (t_averaged() - SuperOp::identity()) * lam;
    Generator {
        op,
        params: *params,
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    for (i, &t) in t_grid.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(invalid("t_grid", format!("times must be finite and >= 0, got {t}")));
        }
        if i > 0 && t < t_grid[i - 1] {
            return Err(invalid("t_grid", "times must be sorted ascending"));
        }
    }
    Ok(())
}

/// exp(Lt) applied to a fixed initial vector, via eigendecomposition when
/// the eigenvector basis is well conditioned and Padé otherwise.
#[derive(Debug, Clone)]
pub struct Propagator {
    l: DMatrix<C64>,
    route: Route,
}

#[derive(Debug, Clone)]
enum Route {
    Eigen {
        values: Vec<C64>,
        vectors: DMatrix<C64>,
        inverse: DMatrix<C64>,
    },
    Pade,
}

impl Propagator {
    pub fn new(params: &SystemParams) -> Result<Self> {
        let l = generator(params).superop().to_dmatrix();
        let route = match linalg::eigen_decomposition(&l) {
            Ok((values, vectors)) if linalg::condition_number(&vectors) <= EIGEN_CONDITION_LIMIT => {
                match vectors.clone().try_inverse() {
                    Some(inverse) => Route::Eigen {
                        values,
                        vectors,
                        inverse,
                    },
                    None => Route::Pade,
                }
            }
            _ => Route::Pade,
        };
        Ok(Self { l, route })
    }

    pub fn uses_eigendecomposition(&self) -> bool {
        matches!(self.route, Route::Eigen { .. })
    }

    /// exp(Lt) as a superoperator.
    pub fn superop_at(&self, t: f64) -> Result<SuperOp> {
        let m = match &self.route {
            Route::Eigen {
                values,
                vectors,
                inverse,
            } => {
                let d = DVector::from_iterator(DIM, values.iter().map(|&z| (z * t).exp()));
                vectors * DMatrix::from_diagonal(&d) * inverse
            }
            Route::Pade => linalg::expm(&(&self.l * C64::new(t, 0.0)))?,
        };
        Ok(SuperOp(LMat::from_iterator(m.iter().cloned())))
    }

    pub fn evolve_vec(&self, v0: &LVec, t: f64) -> Result<LVec> {
        match &self.route {
            Route::Eigen {
                values,
                vectors,
                inverse,
            } => {
                let v = DVector::from_iterator(DIM, v0.iter().cloned());
                let mut c = inverse * v;
                for (ci, &z) in c.iter_mut().zip(values) {
                    *ci *= (z * t).exp();
                }
                let out = vectors * c;
                Ok(LVec::from_iterator(out.iter().cloned()))
            }
            Route::Pade => Ok(self.superop_at(t)?.apply(v0)),
        }
    }
}

/// ρ̄(t) = exp(Lt) ρ₀ on every grid time. Outputs are validated, never
/// repaired.
pub fn propagate(
    rho0: &DensityMatrix,
    params: &SystemParams,
    t_grid: &[f64],
) -> Result<Vec<DensityMatrix>> {
    check_grid(t_grid)?;
    let prop = Propagator::new(params)?;
    let v0 = vectorize(rho0);
    t_grid
        .iter()
        .map(|&t| {
            let v = prop.evolve_vec(&v0, t)?;
            devectorize(&v)
        })
        .collect()
}

fn require_unique_stationary(params: &SystemParams) -> Result<()> {
    if params.lambda() <= 0.0 {
        return Err(invalid(
            "lambda",
            "stationary state is not unique without pulses (lambda must be > 0)",
        ));
    }
    if params.delta() == 0.0 {
        return Err(invalid(
            "delta",
            "stationary state is not unique when levels 1 and 2 are uncoupled (delta must be != 0)",
        ));
    }
    Ok(())
}

/// The kernel of L normalized to unit trace.
pub fn stationary_state(params: &SystemParams) -> Result<DensityMatrix> {
    require_unique_stationary(params)?;
    let mut a = generator(params).superop().to_dmatrix();
    // replace the 11 equation by the trace condition
    for c in 0..DIM {
        a[(0, c)] = C64::new(0.0, 0.0);
    }
    for &p in &LiouvilleBasis::POPULATIONS {
        a[(0, p)] = C64::new(1.0, 0.0);
    }
    let mut rhs = DVector::zeros(DIM);
    rhs[0] = C64::new(1.0, 0.0);
    let x = linalg::solve(&a, &rhs)?;
    devectorize(&LVec::from_iterator(x.iter().cloned()))
}

fn is_zero_mode(z: C64, scale: f64) -> bool {
    z.norm() <= 1e-10 * scale.max(1.0)
}

fn pick_slowest(values: impl IntoIterator<Item = C64>, scale: f64) -> Result<C64> {
    values
        .into_iter()
        .filter(|z| !is_zero_mode(*z, scale))
        .max_by(|a, b| {
            a.re.total_cmp(&b.re)
                .then_with(|| a.im.total_cmp(&b.im))
        })
        .ok_or_else(|| Error::Eigen("generator has no nonzero eigenvalue".into()))
}

/// The nonzero eigenvalue of L with the largest real part; of a conjugate
/// pair, the member with positive imaginary part.
pub fn slowest_mode(params: &SystemParams) -> Result<C64> {
    require_unique_stationary(params)?;
    let l = generator(params).superop().to_dmatrix();
    let scale = linalg::norm1(&l);
    pick_slowest(linalg::eigenvalues(&l)?, scale)
}

/// Like [`slowest_mode`], restricted to the invariant block
/// {11, 22, 12, 21, 33} that carries the populations. This is the mode that
/// governs the long-time approach of P₁(t) to 1/3 from ρ(0) = |1⟩⟨1|.
pub fn population_slowest_mode(params: &SystemParams) -> Result<C64> {
    require_unique_stationary(params)?;
    let l = generator(params);
    let idx = [0usize, 1, 2, 3, 4];
    let block = DMatrix::from_fn(idx.len(), idx.len(), |r, c| l.matrix()[(idx[r], idx[c])]);
    let scale = linalg::norm1(&block);
    pick_slowest(linalg::eigenvalues(&block)?, scale)
}
