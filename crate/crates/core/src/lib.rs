pub mod analysis;
pub mod cli;
pub mod curves;
pub mod error;
pub mod hilbert;
pub mod laplace;
pub mod linalg;
pub mod liouville;
pub mod montecarlo;

pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, PulseStrength, SystemParams};
