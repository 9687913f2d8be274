use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("Laplace variable s = {s} is at (or numerically indistinguishable from) a pole of {what}")]
    Pole { what: &'static str, s: num_complex::Complex64 },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("matrix exponential did not converge: {0}")]
    ExpmNonConvergence(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("polynomial root finder did not converge (degree {degree})")]
    RootFinder { degree: usize },

    #[error(
        "residue extraction is ill-conditioned: poles {a} and {b} are closer than {tol:e} \
         but do not form a verified multiple root; use Talbot inversion instead"
    )]
    IllConditionedResidues {
        a: num_complex::Complex64,
        b: num_complex::Complex64,
        tol: f64,
    },

    #[error("rational function is not strictly proper (numerator degree {num} >= denominator degree {den})")]
    NotStrictlyProper { num: usize, den: usize },

    #[error("inverse transform is not real at t = {t}: imaginary part {imag:e}")]
    NonRealInverse { t: f64, imag: f64 },

    #[error("Talbot contour produced a non-finite value at t = {t}")]
    TalbotNonFinite { t: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("collapse check failed: {0}")]
    Collapse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
