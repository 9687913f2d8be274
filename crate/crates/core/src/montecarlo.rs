//! Direct simulation of pulse-interrupted Rabi dynamics.
//!
//! Each trajectory carries a pure state ψ ∈ ℂ³ starting from |1⟩. Free
//! evolution over exponentially distributed waiting times alternates with
//! pulses e^{−iθS} of random strength. Grid times falling inside a free
//! segment are recorded by propagating the partial interval exactly.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::hilbert::{populations_of, pulse_operator_raw, unitary_propagator, Op3, SystemParams, C64};

/// Trajectories per work item. Statistics are merged chunk by chunk in
/// index order, so results do not depend on the thread count.
const CHUNK: usize = 1024;

/// Distribution of the pulse strength θ.
#[derive(Clone, Default)]
pub enum ThetaDistribution {
    /// θ uniform in [0, 2π); the only choice the averaged generator assumes.
    #[default]
    Uniform,
    Fixed(f64),
    /// Maps u uniform in [0, 1) to θ.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ThetaDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "Uniform"),
            Self::Fixed(theta) => write!(f, "Fixed({theta})"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ThetaDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform => TAU * rng.random::<f64>(),
            Self::Fixed(theta) => *theta,
            Self::Custom(f) => f(rng.random::<f64>()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub params: SystemParams,
    pub n_traj: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub theta_dist: ThetaDistribution,
}

impl TrajectoryConfig {
    pub fn new(params: SystemParams, n_traj: usize, seed: u64, t_grid: Vec<f64>) -> Result<Self> {
        let config = Self {
            params,
            n_traj,
            seed,
            t_grid,
            theta_dist: ThetaDistribution::Uniform,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_theta_dist(mut self, dist: ThetaDistribution) -> Self {
        self.theta_dist = dist;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(invalid("n_traj", "need at least one trajectory"));
        }
        for (i, &t) in self.t_grid.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(invalid("t_grid", format!("times must be finite and >= 0, got {t}")));
            }
            if i > 0 && t < self.t_grid[i - 1] {
                return Err(invalid("t_grid", "times must be sorted ascending"));
            }
        }
        Ok(())
    }
}

/// Exponential variate −ln(u)/λ with u uniform in (0, 1].
pub fn sample_waiting_time<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("waiting times need 0 < lambda < inf, got {lambda}")));
    }
    let u = 1.0 - rng.random::<f64>();
    Ok(-u.ln() / lambda)
}

/// The generator for trajectory `index`: the seed picks the key, the index
/// picks an independent ChaCha stream.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One realization sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub states: Vec<Vector3<C64>>,
    /// Number of pulses applied at or before each grid time.
    pub pulse_counts: Vec<u64>,
}

impl TrajectoryRecord {
    pub fn populations(&self) -> Vec<[f64; 3]> {
        self.states.iter().map(populations_of).collect()
    }
}

/// Simulates trajectory `traj_index` of the ensemble in `config`.
pub fn run_trajectory_record(config: &TrajectoryConfig, traj_index: usize) -> Result<TrajectoryRecord> {
    config.validate()?;
    if traj_index >= config.n_traj {
        return Err(invalid(
            "traj_index",
            format!("must be < n_traj = {}, got {traj_index}", config.n_traj),
        ));
    }
    let params = &config.params;
    let lambda = params.lambda();
    let mut rng = trajectory_rng(config.seed, traj_index as u64);
    let n = config.t_grid.len();
    let mut states = Vec::with_capacity(n);
    let mut pulse_counts = Vec::with_capacity(n);

    let mut psi = Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let mut seg_start = 0.0;
    let mut pulses = 0u64;
    let mut next = 0usize;
    while next < n {
        let seg_end = if lambda > 0.0 {
            seg_start + sample_waiting_time(&mut rng, lambda)?
        } else {
            f64::INFINITY
        };
        while next < n && config.t_grid[next] < seg_end {
            let u: Op3 = unitary_propagator(params, config.t_grid[next] - seg_start);
            states.push(u * psi);
            pulse_counts.push(pulses);
            next += 1;
        }
        if next == n {
            break;
        }
        psi = unitary_propagator(params, seg_end - seg_start) * psi;
        let theta = config.theta_dist.sample(&mut rng);
        psi = pulse_operator_raw(theta) * psi;
        pulses += 1;
        seg_start = seg_end;
    }
    Ok(TrajectoryRecord {
        states,
        pulse_counts,
    })
}

/// Populations of trajectory `traj_index` at each grid time.
pub fn run_trajectory(config: &TrajectoryConfig, traj_index: usize) -> Result<Vec<[f64; 3]>> {
    Ok(run_trajectory_record(config, traj_index)?.populations())
}

/// Ensemble statistics on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub t: Vec<f64>,
    pub mean: Vec<[f64; 3]>,
    pub stderr: Vec<[f64; 3]>,
    pub n_traj: usize,
    /// Ensemble-averaged density matrix.
    pub mean_rho: Vec<Op3>,
    pub mean_pulses: Vec<f64>,
    /// Standard error of the pulse count.
    pub stderr_pulses: Vec<f64>,
}

impl Estimate {
    pub fn p1(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m[0]).collect()
    }

    pub fn p1_stderr(&self) -> Vec<f64> {
        self.stderr.iter().map(|s| s[0]).collect()
    }

    /// Tr(ρ̄²) of the ensemble mean at grid point `i`.
    pub fn ensemble_purity(&self, i: usize) -> f64 {
        let r = &self.mean_rho[i];
        (r * r).trace().re
    }
}

/// Welford accumulators for one chunk of trajectories.
#[derive(Debug, Clone)]
struct Accumulator {
    count: f64,
    mean: Vec<[f64; 4]>,
    m2: Vec<[f64; 4]>,
    rho: Vec<Op3>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![[0.0; 4]; n],
            m2: vec![[0.0; 4]; n],
            rho: vec![Op3::zeros(); n],
        }
    }

    fn push(&mut self, rec: &TrajectoryRecord) {
        self.count += 1.0;
        for (i, psi) in rec.states.iter().enumerate() {
            let p = populations_of(psi);
            let x = [p[0], p[1], p[2], rec.pulse_counts[i] as f64];
            for k in 0..4 {
                let d = x[k] - self.mean[i][k];
                self.mean[i][k] += d / self.count;
                self.m2[i][k] += d * (x[k] - self.mean[i][k]);
            }
            self.rho[i] += psi * psi.adjoint();
        }
    }

    /// Chan et al. pairwise merge.
    fn merge(mut self, other: &Accumulator) -> Self {
        if other.count == 0.0 {
            return self;
        }
        let n = self.count + other.count;
        for i in 0..self.mean.len() {
            for k in 0..4 {
                let d = other.mean[i][k] - self.mean[i][k];
                self.mean[i][k] += d * other.count / n;
                self.m2[i][k] += other.m2[i][k] + d * d * self.count * other.count / n;
            }
            self.rho[i] += other.rho[i];
        }
        self.count = n;
        self
    }
}

/// Mean and standard error over `config.n_traj` trajectories, computed in
/// parallel. Bit-for-bit reproducible for a fixed config.
pub fn estimate(config: &TrajectoryConfig) -> Result<Estimate> {
    config.validate()?;
    let n = config.t_grid.len();
    let n_chunks = config.n_traj.div_ceil(CHUNK);
    let chunks: Vec<Accumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(n);
            for idx in c * CHUNK..((c + 1) * CHUNK).min(config.n_traj) {
                acc.push(&run_trajectory_record(config, idx)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = chunks
        .iter()
        .fold(Accumulator::new(n), |acc, c| acc.merge(c));

    let count = total.count;
    let se = |m2: f64| {
        if count > 1.0 {
            (m2 / (count - 1.0) / count).sqrt()
        } else {
            0.0
        }
    };
    Ok(Estimate {
        t: config.t_grid.clone(),
        mean: total.mean.iter().map(|m| [m[0], m[1], m[2]]).collect(),
        stderr: total.m2.iter().map(|m| [se(m[0]), se(m[1]), se(m[2])]).collect(),
        n_traj: config.n_traj,
        mean_rho: total.rho.iter().map(|r| r / C64::new(count, 0.0)).collect(),
        mean_pulses: total.mean.iter().map(|m| m[3]).collect(),
        stderr_pulses: total.m2.iter().map(|m| se(m[3])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::DensityMatrix;
    use crate::liouville::propagate;

    fn params(d: f64, de: f64, lam: f64) -> SystemParams {
        SystemParams::new(d, de, lam).unwrap()
    }

    fn grid(t_max: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
    }

    fn rabi(t: f64) -> f64 {
        let w = 1.25f64.sqrt();
        ((w * t).cos().powi(2) + 0.25) / 1.25
    }

    #[test]
    fn waiting_time_means() {
        for (lam, tol) in [(1.0, 0.005), (0.005, 0.005 * 200.0)] {
            let mut rng = trajectory_rng(7, 0);
            let n = 1_000_000;
            let mean = (0..n)
                .map(|_| sample_waiting_time(&mut rng, lam).unwrap())
                .sum::<f64>()
                / n as f64;
            assert!((mean - 1.0 / lam).abs() < tol, "λ={lam}: {mean}");
        }
    }

    #[test]
    fn waiting_times_are_reproducible_and_positive() {
        let draw = || {
            let mut rng = trajectory_rng(42, 3);
            (0..100)
                .map(|_| sample_waiting_time(&mut rng, 0.5).unwrap())
                .collect::<Vec<_>>()
        };
        let a = draw();
        assert_eq!(a, draw());
        assert!(a.iter().all(|&x| x >= 0.0 && x.is_finite()));
        let mut other = trajectory_rng(42, 4);
        assert_ne!(a[0], sample_waiting_time(&mut other, 0.5).unwrap());
    }

    #[test]
    fn waiting_time_rejects_nonpositive_rate() {
        let mut rng = trajectory_rng(1, 0);
        assert!(sample_waiting_time(&mut rng, 0.0).is_err());
        assert!(sample_waiting_time(&mut rng, -1.0).is_err());
        assert!(sample_waiting_time(&mut rng, f64::NAN).is_err());
    }

    #[test]
    fn config_validation() {
        let p = params(1.0, 0.5, 0.5);
        assert!(TrajectoryConfig::new(p, 0, 1, vec![0.0]).is_err());
        assert!(TrajectoryConfig::new(p, 1, 1, vec![1.0, 0.5]).is_err());
        assert!(TrajectoryConfig::new(p, 1, 1, vec![-1.0]).is_err());
        let c = TrajectoryConfig::new(p, 2, 1, vec![0.0, 1.0]).unwrap();
        assert!(run_trajectory(&c, 2).is_err());
    }

    #[test]
    fn no_pulses_is_exact_rabi() {
        let ts = grid(20.0, 200);
        let c = TrajectoryConfig::new(params(1.0, 0.5, 0.0), 1, 9, ts.clone()).unwrap();
        let pops = run_trajectory(&c, 0).unwrap();
        for (t, p) in ts.iter().zip(&pops) {
            assert!((p[0] - rabi(*t)).abs() < 1e-10);
        }
        let est = estimate(&c).unwrap();
        assert!(est.stderr.iter().all(|s| s[0] == 0.0));
        assert!(est.p1().iter().zip(&ts).all(|(p, t)| (p - rabi(*t)).abs() < 1e-10));
    }

    #[test]
    fn uncoupled_levels_never_leave_level_one() {
        let c = TrajectoryConfig::new(params(0.0, 0.5, 1.0), 20, 3, grid(30.0, 50)).unwrap();
        for i in 0..20 {
            for p in run_trajectory(&c, i).unwrap() {
                assert!((p[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trajectories_stay_pure_and_normalized() {
        let c = TrajectoryConfig::new(params(1.0, 0.5, 50.0), 10, 11, grid(2.0, 40)).unwrap();
        for i in 0..10 {
            let rec = run_trajectory_record(&c, i).unwrap();
            for psi in &rec.states {
                let rho = psi * psi.adjoint();
                assert!(((&rho * &rho).trace().re - 1.0).abs() < 1e-9);
                let p = populations_of(psi);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(p.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
            }
        }
    }

    #[test]
    fn pluggable_theta_distributions() {
        let mut rng = trajectory_rng(0, 0);
        let d = ThetaDistribution::Fixed(1.0);
        assert_eq!(d.sample(&mut rng), 1.0);
        let custom = ThetaDistribution::Custom(Arc::new(|u| u * 0.0 + 2.0));
        assert_eq!(custom.sample(&mut rng), 2.0);
        // θ = 0 pulses are the identity, so the trajectory is pure Rabi
        let ts = grid(10.0, 30);
        let c = TrajectoryConfig::new(params(1.0, 0.5, 2.0), 1, 0, ts.clone())
            .unwrap()
            .with_theta_dist(ThetaDistribution::Fixed(0.0));
        let pops = run_trajectory(&c, 0).unwrap();
        assert!(pops.iter().zip(&ts).all(|(p, t)| (p[0] - rabi(*t)).abs() < 1e-10));
    }

    #[test]
    fn matches_averaged_generator() {
        let p = params(1.0, 0.5, 0.5);
        let ts = grid(20.0, 41);
        let c = TrajectoryConfig::new(p, 20_000, 2025, ts.clone()).unwrap();
        let est = estimate(&c).unwrap();
        let exact = propagate(&DensityMatrix::pure_level(1).unwrap(), &p, &ts).unwrap();
        let mut flagged = 0;
        for i in 0..ts.len() {
            let e = exact[i].populations()[0];
            let (m, s) = (est.mean[i][0], est.stderr[i][0]);
            if (m - e).abs() > 4.0 * s && s > 0.0 {
                flagged += 1;
            }
            let total: f64 = est.mean[i].iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
        assert!(flagged <= 1, "{flagged} points beyond 4σ");
    }

    #[test]
    fn relaxes_to_one_third_and_ensemble_purity_drops() {
        let p = params(1.0, 0.5, 0.5);
        let ts = vec![0.0, 100.0];
        let c = TrajectoryConfig::new(p, 20_000, 5, ts).unwrap();
        let est = estimate(&c).unwrap();
        assert!((est.mean[1][0] - 1.0 / 3.0).abs() <= 4.0 * est.stderr[1][0]);
        assert!((est.ensemble_purity(0) - 1.0).abs() < 1e-12);
        assert!((est.ensemble_purity(1) - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = TrajectoryConfig::new(params(1.0, 0.5, 0.5), 5000, 77, grid(10.0, 20)).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate(&c).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(8));
    }

    #[test]
    fn stderr_scales_as_inverse_sqrt_n() {
        let p = params(1.0, 0.5, 0.5);
        let ts = vec![3.0];
        let se = |n: usize| {
            let c = TrajectoryConfig::new(p, n, 99, ts.clone()).unwrap();
            estimate(&c).unwrap().stderr[0][0]
        };
        let (a, b, c) = (se(1000), se(10_000), se(100_000));
        for (ratio, name) in [(a / b, "1e3/1e4"), (b / c, "1e4/1e5")] {
            let expected = 10f64.sqrt();
            assert!((ratio / expected - 1.0).abs() < 0.2, "{name}: {ratio}");
        }
    }

    #[test]
    fn pulse_count_is_poisson() {
        let lam = 0.8;
        let ts = vec![0.0, 2.5, 10.0];
        let c = TrajectoryConfig::new(params(1.0, 0.5, lam), 20_000, 13, ts.clone()).unwrap();
        let est = estimate(&c).unwrap();
        for (i, &t) in ts.iter().enumerate() {
            let want = lam * t;
            let got = est.mean_pulses[i];
            // Poisson: the variance equals the mean
            let sigma = (want / c.n_traj as f64).sqrt();
            assert!((got - want).abs() <= 3.0 * sigma.max(1e-12), "t={t}: {got} vs {want}");
        }
    }
}
