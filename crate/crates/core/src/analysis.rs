//! Post-processing of P₁(t) curves: tail-rate fits, collapse on the λt axis,
//! and distance from the pulse-free Rabi curve.

use crate::curves::{analytic_p1, rabi_p1};
use crate::error::{invalid, Error, Result};
use crate::hilbert::SystemParams;

/// Values of P₁ − 1/3 below this are treated as numerical noise.
pub const NOISE_FLOOR: f64 = 1e-9;

/// The fit window ends where P₁ − 1/3 first drops below this.
pub const TAIL_CAP: f64 = 1e-7;

pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    /// The window actually used, after capping.
    pub fit_window: (f64, f64),
    pub n_points: usize,
}

/// [2/λ, 8/λ].
pub fn default_window(lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("tail window needs lambda > 0, got {lambda}")));
    }
    Ok((2.0 / lambda, 8.0 / lambda))
}

/// Least-squares line through (t, ln(P₁ − 1/3)) over the window; the rate is
/// minus the slope.
pub fn fit_tail_rate(t: &[f64], p1: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if t.len() != p1.len() {
        return Err(invalid("p1", format!("length {} does not match t ({})", p1.len(), t.len())));
    }
    let (lo, hi) = window;
    if !(lo < hi) || t.is_empty() || lo < t[0] || hi > t[t.len() - 1] {
        return Err(invalid(
            "window",
            format!("[{lo}, {hi}] must be increasing and inside the data range"),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut end = hi;
    for (&ti, &pi) in t.iter().zip(p1) {
        if ti < lo || ti > hi {
            continue;
        }
        let v = pi - 1.0 / 3.0;
        if v <= 0.0 {
            return Err(Error::Fit(format!(
                "P1 - 1/3 = {v:e} is not positive at t = {ti} inside the window"
            )));
        }
        if v < TAIL_CAP {
            break;
        }
        end = ti;
        if v > 10.0 * NOISE_FLOOR {
            xs.push(ti);
            ys.push(v.ln());
        }
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} usable points in the window, need at least {MIN_FIT_POINTS}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(DecayFit {
        rate: -slope,
        intercept,
        rms_residual: (rss / n).sqrt(),
        fit_window: (lo, end),
        n_points: xs.len(),
    })
}

/// A P₁ curve sampled on its own time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub lambda: f64,
    pub t: Vec<f64>,
    pub p1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub lambdas: Vec<f64>,
    /// Common λt grid.
    pub x: Vec<f64>,
    /// One resampled curve per λ, on `x`.
    pub resampled: Vec<Vec<f64>>,
    pub max_deviation: f64,
    /// Indices into `lambdas` of the pair attaining `max_deviation`.
    pub worst_pair: (usize, usize),
}

pub const COLLAPSE_RANGE: (f64, f64) = (2.0, 8.0);
const COLLAPSE_POINTS: usize = 601;
const CURVE_POINTS: usize = 2001;

fn interpolate(t: &[f64], y: &[f64], at: f64) -> f64 {
    let k = t.partition_point(|&ti| ti < at);
    if k == 0 {
        return y[0];
    }
    if k == t.len() {
        return y[t.len() - 1];
    }
    let (t0, t1) = (t[k - 1], t[k]);
    if t1 == t0 {
        return y[k];
    }
    let w = (at - t0) / (t1 - t0);
    y[k - 1] * (1.0 - w) + y[k] * w
}

/// Resamples each curve onto a common λt grid over `range` by linear
/// interpolation and reports the largest pairwise gap.
pub fn collapse_curves(curves: &[Curve], range: (f64, f64)) -> Result<CollapseReport> {
    if curves.len() < 2 {
        return Err(Error::Collapse(format!("need at least 2 curves, got {}", curves.len())));
    }
    for c in curves {
        if !(c.lambda > 0.0) || !c.lambda.is_finite() {
            return Err(Error::Collapse(format!("lambda must be > 0 on the λt axis, got {}", c.lambda)));
        }
        if c.t.len() != c.p1.len() || c.t.len() < 2 {
            return Err(invalid("curves", "each curve needs matching t and p1 of length >= 2"));
        }
        let (x0, x1) = (c.lambda * c.t[0], c.lambda * c.t[c.t.len() - 1]);
        if x0 > range.0 || x1 < range.1 {
            return Err(Error::Collapse(format!(
                "curve at lambda = {} covers λt ∈ [{x0}, {x1}], not [{}, {}]",
                c.lambda, range.0, range.1
            )));
        }
    }
    let x: Vec<f64> = (0..COLLAPSE_POINTS)
        .map(|k| range.0 + (range.1 - range.0) * k as f64 / (COLLAPSE_POINTS - 1) as f64)
        .collect();
    let resampled: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| x.iter().map(|&xi| interpolate(&c.t, &c.p1, xi / c.lambda)).collect())
        .collect();
    let mut max_deviation = 0.0;
    let mut worst_pair = (0, 1);
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let d = resampled[i]
                .iter()
                .zip(&resampled[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if d > max_deviation {
                max_deviation = d;
                worst_pair = (i, j);
            }
        }
    }
    Ok(CollapseReport {
        lambdas: curves.iter().map(|c| c.lambda).collect(),
        x,
        resampled,
        max_deviation,
        worst_pair,
    })
}

/// Exact P₁ curves for each parameter set, compared on λt ∈ [2, 8]. All sets
/// must share Δ and δε.
pub fn collapse_check(params_list: &[SystemParams]) -> Result<CollapseReport> {
    if params_list.len() < 2 {
        return Err(Error::Collapse(format!(
            "need at least 2 parameter sets, got {}",
            params_list.len()
        )));
    }
    let first = params_list[0];
    if params_list
        .iter()
        .any(|p| p.delta() != first.delta() || p.deps() != first.deps())
    {
        return Err(Error::Collapse("all parameter sets must share delta and deps".into()));
    }
    let curves = params_list
        .iter()
        .map(|p| {
            let lam = p.lambda();
            if !(lam > 0.0) {
                return Err(Error::Collapse(format!("lambda must be > 0 on the λt axis, got {lam}")));
            }
            let t_end = 1.05 * COLLAPSE_RANGE.1 / lam;
            let t: Vec<f64> = (0..CURVE_POINTS)
                .map(|k| t_end * k as f64 / (CURVE_POINTS - 1) as f64)
                .collect();
            let p1 = analytic_p1(p, &t)?;
            Ok(Curve { lambda: lam, t, p1 })
        })
        .collect::<Result<Vec<_>>>()?;
    collapse_curves(&curves, COLLAPSE_RANGE)
}

/// max |P₁(t) − Rabi formula| over the grid, with P₁ from the exact
/// residue inversion.
pub fn rabi_deviation(params: &SystemParams, t_grid: &[f64]) -> Result<f64> {
    let p1 = analytic_p1(params, t_grid)?;
    Ok(t_grid
        .iter()
        .zip(&p1)
        .map(|(&t, &p)| (p - rabi_p1(params, t)).abs())
        .fold(0.0, f64::max))
}
