//! Numerical inversion on a Talbot-shaped contour.
//!
//! The contour is z(θ) = μ(θ cot θ + iνθ), θ ∈ (−π, π), with the trapezoid
//! rule in θ. It opens to the left, so every pole with Re ≤ 0 lies inside as
//! long as the contour crosses the imaginary axis above the largest pole
//! frequency; ν stretches it vertically for that purpose. For real signals
//! only the upper half is evaluated.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::hilbert::C64;

pub const DEFAULT_TALBOT_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TalbotConfig {
    pub nodes: usize,
    /// Upper bound on |Im p| over the poles of the transform, when known.
    /// Without it the contour assumes the poles sit close to the real axis.
    pub max_frequency: Option<f64>,
}

impl Default for TalbotConfig {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_TALBOT_NODES,
            max_frequency: None,
        }
    }
}

impl TalbotConfig {
    pub fn with_nodes(nodes: usize) -> Self {
        Self {
            nodes,
            ..Self::default()
        }
    }

    pub fn with_max_frequency(mut self, omega: f64) -> Self {
        self.max_frequency = Some(omega);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 4 {
            return Err(invalid("talbot_nodes", format!("need at least 4 nodes, got {}", self.nodes)));
        }
        if let Some(w) = self.max_frequency {
            if !w.is_finite() || w < 0.0 {
                return Err(invalid("max_frequency", format!("must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }

    fn contour(&self, t: f64) -> (f64, f64) {
        let m = self.nodes as f64;
        let mu = (m / 5.0).min(12.0) / t;
        let nu = match self.max_frequency {
            Some(w) => (1.5 * w / (mu * PI / 2.0)).max(1.0),
            None => 1.0,
        };
        (mu, nu)
    }
}

/// f(t) from its transform F, for t > 0. F must be analytic to the right of
/// its poles and satisfy F(conj s) = conj F(s).
pub fn invert_talbot<F>(f: F, t: f64, config: &TalbotConfig) -> Result<f64>
where
    F: Fn(C64) -> Result<C64>,
{
    config.validate()?;
    if !t.is_finite() || t <= 0.0 {
        return Err(invalid("t", format!("Talbot inversion needs t > 0, got {t}")));
    }
    let (mu, nu) = config.contour(t);
    let m = config.nodes;
    let nonfinite = |z: C64| !z.re.is_finite() || !z.im.is_finite();

    // θ = 0: z = μ, z' = iμν
    let f0 = f(C64::new(mu, 0.0))?;
    let mut acc = 0.5 * ((mu * t).exp() * f0 * mu * nu).re;
    if nonfinite(f0) || !acc.is_finite() {
        return Err(Error::TalbotNonFinite { t });
    }
    for k in 1..m {
        let th = k as f64 * PI / m as f64;
        let cot = th.cos() / th.sin();
        let z = C64::new(mu * th * cot, mu * nu * th);
        let dz = C64::new(mu * (cot - th / th.sin().powi(2)), mu * nu);
        let fz = f(z)?;
        let term = ((z * t).exp() * fz * dz / C64::new(0.0, 1.0)).re;
        if nonfinite(fz) || !term.is_finite() {
            return Err(Error::TalbotNonFinite { t });
        }
        acc += term;
    }
    Ok(acc / m as f64)
}

/// [`invert_talbot`] over a grid, one independent quadrature per time.
pub fn invert_talbot_grid<F>(f: F, t_grid: &[f64], config: &TalbotConfig) -> Result<Vec<f64>>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    use rayon::prelude::*;
    t_grid
        .par_iter()
        .map(|&t| invert_talbot(&f, t, config))
        .collect()
}
