//! P₁, P₂, P₃ on a time grid by each of the four methods, starting from
//! ρ(0) = |1⟩⟨1|.

use crate::error::{invalid, Result};
use crate::hilbert::{DensityMatrix, SystemParams};
use crate::laplace::{
    build_rational_p1, build_rational_p2, build_rational_p3, invert_residues, invert_talbot_grid,
    populations_laplace, TalbotConfig,
};
use crate::liouville::propagate;
use crate::montecarlo::{estimate, Estimate, TrajectoryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// `n` times on [0, t_max] (linear) or geometric on [t_max·10⁻⁴, t_max]
/// (log).
pub fn time_grid(t_max: f64, n: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if !t_max.is_finite() || t_max <= 0.0 {
        return Err(invalid("t_max", format!("must be finite and > 0, got {t_max}")));
    }
    if n < 2 {
        return Err(invalid("n_points", format!("must be >= 2, got {n}")));
    }
    let last = (n - 1) as f64;
    Ok(match spacing {
        Spacing::Linear => (0..n).map(|k| t_max * k as f64 / last).collect(),
        Spacing::Log => {
            let t0 = t_max * 1e-4;
            let ratio = (t_max / t0).ln();
            let mut g: Vec<f64> = (0..n).map(|k| t0 * (ratio * k as f64 / last).exp()).collect();
            g[n - 1] = t_max;
            g
        }
    })
}

/// [Δ²cos²(ωt) + δε²]/ω², the pulse-free stay-put probability.
pub fn rabi_p1(params: &SystemParams, t: f64) -> f64 {
    let w = params.omega();
    if w == 0.0 {
        return 1.0;
    }
    let (d, de) = (params.delta(), params.deps());
    (d * d * (w * t).cos().powi(2) + de * de) / (w * w)
}

/// Residue inversion of the exact rational transforms.
pub fn analytic(params: &SystemParams, t_grid: &[f64]) -> Result<Vec<[f64; 3]>> {
    let p1 = invert_residues(&build_rational_p1(params), t_grid)?;
    let p2 = invert_residues(&build_rational_p2(params), t_grid)?;
    let p3 = invert_residues(&build_rational_p3(params), t_grid)?;
    Ok((0..t_grid.len()).map(|i| [p1[i], p2[i], p3[i]]).collect())
}

/// P₁ alone by residue inversion.
pub fn analytic_p1(params: &SystemParams, t_grid: &[f64]) -> Result<Vec<f64>> {
    invert_residues(&build_rational_p1(params), t_grid)
}

/// Matrix-exponential propagation of the averaged generator.
pub fn resolvent(params: &SystemParams, t_grid: &[f64]) -> Result<Vec<[f64; 3]>> {
    let rho0 = DensityMatrix::pure_level(1)?;
    Ok(propagate(&rho0, params, t_grid)?
        .iter()
        .map(|r| r.populations())
        .collect())
}

/// Talbot inversion of the pointwise Laplace formulas. The contour is sized
/// for the Rabi frequency 2ω; t = 0 takes the initial condition.
pub fn talbot(params: &SystemParams, t_grid: &[f64], nodes: usize) -> Result<Vec<[f64; 3]>> {
    let cfg = TalbotConfig::with_nodes(nodes).with_max_frequency(2.0 * params.omega());
    let positive: Vec<f64> = t_grid.iter().copied().filter(|&t| t > 0.0).collect();
    if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(invalid("t_grid", "times must be finite and >= 0"));
    }
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|k| invert_talbot_grid(|s| Ok(populations_laplace(params, s)?[k]), &positive, &cfg))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(t_grid.len());
    let mut j = 0;
    for &t in t_grid {
        if t == 0.0 {
            out.push([1.0, 0.0, 0.0]);
        } else {
            out.push([cols[0][j], cols[1][j], cols[2][j]]);
            j += 1;
        }
    }
    Ok(out)
}

pub fn monte_carlo(params: &SystemParams, t_grid: &[f64], n_traj: usize, seed: u64) -> Result<Estimate> {
    estimate(&TrajectoryConfig::new(*params, n_traj, seed, t_grid.to_vec())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = time_grid(10.0, 11, Spacing::Linear).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 10.0);
        assert_eq!(g[3], 3.0);
        let l = time_grid(1e4, 5, Spacing::Log).unwrap();
        assert!((l[0] - 1.0).abs() < 1e-12);
        assert!((l[1] - 10.0).abs() < 1e-10);
        assert_eq!(l[4], 1e4);
        assert!(time_grid(0.0, 5, Spacing::Linear).is_err());
        assert!(time_grid(1.0, 1, Spacing::Linear).is_err());
    }

    #[test]
    fn methods_agree() {
        let p = SystemParams::new(1.0, 0.5, 0.5).unwrap();
        let g = time_grid(20.0, 50, Spacing::Linear).unwrap();
        let a = analytic(&p, &g).unwrap();
        let r = resolvent(&p, &g).unwrap();
        let t = talbot(&p, &g, 64).unwrap();
        for i in 0..g.len() {
            for k in 0..3 {
                assert!((a[i][k] - r[i][k]).abs() < 1e-10);
                assert!((a[i][k] - t[i][k]).abs() < 1e-6);
            }
            assert!((a[i].iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rabi_formula_endpoints() {
        let p = SystemParams::new(1.0, 0.5, 0.0).unwrap();
        assert!((rabi_p1(&p, 0.0) - 1.0).abs() < 1e-15);
        let half_period = std::f64::consts::FRAC_PI_2 / p.omega();
        assert!((rabi_p1(&p, half_period) - 0.2).abs() < 1e-15);
        let frozen = SystemParams::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(rabi_p1(&frozen, 3.0), 1.0);
    }
}
