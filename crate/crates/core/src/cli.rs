//! Command-line front end.
//!
//! Settings come from an optional flat `key = value` file (`--config`) and
//! from flags; flags win. Keys are the flag names without the leading
//! dashes (`t-max` and `t_max` are both accepted).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::analysis::{collapse_check, default_window, fit_tail_rate};
use crate::curves::{self, rabi_p1, Spacing};
use crate::error::Error;
use crate::hilbert::SystemParams;
use crate::laplace::DEFAULT_TALBOT_NODES;
use crate::liouville::generator;

pub const DEFAULT_SEED: u64 = 2025;
pub const DEFAULT_N_TRAJ: usize = 10_000;
pub const DEFAULT_T_MAX: f64 = 20.0;
pub const DEFAULT_N_POINTS: usize = 200;
pub const DEFAULT_DELTA: f64 = 1.0;
pub const DEFAULT_DEPS: f64 = 0.5;

/// `compare` tolerances.
pub const TOL_ANALYTIC_RESOLVENT: f64 = 1e-6;
pub const TOL_ANALYTIC_TALBOT: f64 = 1e-4;
pub const TOL_Z_MC: f64 = 4.0;

/// `limits` tolerances.
pub const TOL_LIMIT_EXACT: f64 = 1e-8;
pub const TOL_LIMIT_TALBOT: f64 = 1e-4;

/// λ values of the `fig1` sweep.
pub const FIG1_LAMBDAS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];
pub const FIG2_LAMBDA: f64 = 0.005;
pub const FIG2_SHORT_T_MAX: f64 = 20.0;
pub const FIG2_LONG_T_MAX: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Residue inversion of the exact Laplace-domain result
    Analytic,
    /// Matrix-exponential propagation of the averaged generator
    Resolvent,
    /// Talbot numerical inversion
    Talbot,
    /// Monte Carlo trajectories, with standard-error columns
    Mc,
    /// All methods side by side plus a discrepancy summary
    Compare,
    /// Checks of the λ = 0 and Δ = 0 limits against closed forms
    Limits,
    /// Eigenvalues of the averaged generator
    Spectrum,
    /// λ sweep at Δ = 1, δε = 0.5, on the λt axis
    Fig1,
    /// λ = 0.005 at Δ = 1, δε = 0.5: short-time and long-time curves
    Fig2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpacingArg {
    Linear,
    Log,
}

impl From<SpacingArg> for Spacing {
    fn from(s: SpacingArg) -> Self {
        match s {
            SpacingArg::Linear => Spacing::Linear,
            SpacingArg::Log => Spacing::Log,
        }
    }
}

/// Stay-put probability of a three-level system under Poisson-timed random
/// pulses.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "pulsed-rabi", version)]
pub struct Args {
    /// What to compute [default: analytic]
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Coupling Δ between levels 1 and 2 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Detuning δε [default: 0.5]
    #[arg(long, allow_negative_numbers = true)]
    pub deps: Option<f64>,
    /// Pulse rate λ >= 0 (required except for fig1/fig2)
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Last grid time, > 0 [default: 20]
    #[arg(long = "t-max", allow_negative_numbers = true)]
    pub t_max: Option<f64>,
    /// Number of grid points, >= 2 [default: 200]
    #[arg(long = "n-points")]
    pub n_points: Option<usize>,
    /// Grid spacing; log is geometric on [t_max·1e-4, t_max] [default: linear]
    #[arg(long, value_enum)]
    pub spacing: Option<SpacingArg>,
    /// Monte Carlo trajectories, >= 1 [default: 10000]
    #[arg(long = "n-traj")]
    pub n_traj: Option<usize>,
    /// Monte Carlo seed [default: 2025]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Talbot quadrature nodes, >= 4 [default: 64]
    #[arg(long = "talbot-nodes")]
    pub talbot_nodes: Option<usize>,
    /// Output CSV path (standard output if absent); for fig2 the stem of
    /// <stem>_short.csv and <stem>_long.csv [fig2 default: fig2]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat key = value file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// With fig1/fig2, also write a gnuplot script next to the CSV
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: SystemParams,
    pub t_max: f64,
    pub n_points: usize,
    pub spacing: Spacing,
    pub n_traj: usize,
    pub seed: u64,
    pub talbot_nodes: usize,
    pub out: Option<PathBuf>,
    pub gnuplot: bool,
}

impl RunConfig {
    pub fn t_grid(&self) -> Result<Vec<f64>, CliError> {
        Ok(curves::time_grid(self.t_max, self.n_points, self.spacing)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
    #[error("consistency failure: {0}")]
    Consistency(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(Error::InvalidParameter { .. }) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
            CliError::Consistency(_) => 3,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

const KEYS: [&str; 11] = [
    "mode",
    "delta",
    "deps",
    "lambda",
    "t-max",
    "n-points",
    "spacing",
    "n-traj",
    "seed",
    "talbot-nodes",
    "out",
];

/// Parses the flat config format: one `key = value` per line, `#` starts a
/// comment, blank lines are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(config_err(format!(
                "line {}: unknown key `{}` (accepted: {})",
                n + 1,
                k.trim(),
                KEYS.join(", ")
            )));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn from_file<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    expected: &str,
) -> Result<Option<T>, CliError> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| config_err(format!("key `{key}`: `{v}` is not {expected}")))
        })
        .transpose()
}

fn enum_from_file<T: ValueEnum>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    map.get(key)
        .map(|v| {
            T::from_str(v, true).map_err(|_| {
                let names: Vec<String> = T::value_variants()
                    .iter()
                    .filter_map(|x| x.to_possible_value().map(|p| p.get_name().to_string()))
                    .collect();
                config_err(format!("key `{key}`: `{v}` is not one of {}", names.join(", ")))
            })
        })
        .transpose()
}

fn check_range(key: &str, value: f64, ok: bool, range: &str) -> Result<(), CliError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("key `{key}`: {value} is outside the accepted range {range}")))
    }
}

/// Merges the config file (if any) with the flags and validates the result.
pub fn resolve(args: Args) -> Result<RunConfig, CliError> {
    let map = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read config file {}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let mode = args
        .mode
        .or(enum_from_file(&map, "mode")?)
        .unwrap_or(Mode::Analytic);
    let preset = matches!(mode, Mode::Fig1 | Mode::Fig2);
    let delta = args.delta.or(from_file(&map, "delta", "a number")?).unwrap_or(DEFAULT_DELTA);
    let deps = args.deps.or(from_file(&map, "deps", "a number")?).unwrap_or(DEFAULT_DEPS);
    let lambda = match args.lambda.or(from_file(&map, "lambda", "a number")?) {
        Some(l) => l,
        None if preset => 0.0,
        None => return Err(config_err("missing required key `lambda` (accepted range: lambda >= 0)")),
    };
    let t_max = args.t_max.or(from_file(&map, "t-max", "a number")?).unwrap_or(DEFAULT_T_MAX);
    let n_points = args
        .n_points
        .or(from_file(&map, "n-points", "a nonnegative integer")?)
        .unwrap_or(DEFAULT_N_POINTS);
    let spacing: Spacing = args
        .spacing
        .or(enum_from_file(&map, "spacing")?)
        .unwrap_or(SpacingArg::Linear)
        .into();
    let n_traj = args
        .n_traj
        .or(from_file(&map, "n-traj", "a nonnegative integer")?)
        .unwrap_or(DEFAULT_N_TRAJ);
    let seed = args
        .seed
        .or(from_file(&map, "seed", "an unsigned 64-bit integer")?)
        .unwrap_or(DEFAULT_SEED);
    let talbot_nodes = args
        .talbot_nodes
        .or(from_file(&map, "talbot-nodes", "a nonnegative integer")?)
        .unwrap_or(DEFAULT_TALBOT_NODES);
    let out = args.out.or(map.get("out").map(PathBuf::from));

    check_range("delta", delta, true, "(finite)")?;
    check_range("deps", deps, true, "(finite)")?;
    check_range("lambda", lambda, lambda >= 0.0, "[0, inf)")?;
    check_range("t-max", t_max, t_max > 0.0, "(0, inf)")?;
    if n_points < 2 {
        return Err(config_err(format!("key `n-points`: {n_points} is outside the accepted range [2, inf)")));
    }
    if n_traj < 1 {
        return Err(config_err("key `n-traj`: 0 is outside the accepted range [1, inf)"));
    }
    if talbot_nodes < 4 {
        return Err(config_err(format!(
            "key `talbot-nodes`: {talbot_nodes} is outside the accepted range [4, inf)"
        )));
    }
    let params = SystemParams::new(delta, deps, lambda)?;
    Ok(RunConfig {
        mode,
        params,
        t_max,
        n_points,
        spacing,
        n_traj,
        seed,
        talbot_nodes,
        out,
        gnuplot: args.gnuplot,
    })
}

/// Parses command-line arguments (including the program name).
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| config_err(e.to_string()))?;
    resolve(args)
}

/// Shortest decimal that round-trips to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn csv_row(out: &mut String, values: &[f64]) {
    let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn emit(path: Option<&Path>, csv: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, csv)?,
        None => stdout.write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn populations_csv(t: &[f64], pops: &[[f64; 3]]) -> String {
    let mut s = String::from("t,P1,P2,P3\n");
    for (ti, p) in t.iter().zip(pops) {
        csv_row(&mut s, &[*ti, p[0], p[1], p[2]]);
    }
    s
}

/// Runs the configured mode, writing CSV to `config.out` (or `stdout`) and
/// summaries to `stdout`. Consistency failures in `compare` and `limits`
/// come back as [`CliError::Consistency`] after the output is written.
pub fn run(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let p = &config.params;
    match config.mode {
        Mode::Analytic => {
            let t = config.t_grid()?;
            emit(config.out.as_deref(), &populations_csv(&t, &curves::analytic(p, &t)?), stdout)
        }
        Mode::Resolvent => {
            let t = config.t_grid()?;
            emit(config.out.as_deref(), &populations_csv(&t, &curves::resolvent(p, &t)?), stdout)
        }
        Mode::Talbot => {
            let t = config.t_grid()?;
            let pops = curves::talbot(p, &t, config.talbot_nodes)?;
            emit(config.out.as_deref(), &populations_csv(&t, &pops), stdout)
        }
        Mode::Mc => {
            let t = config.t_grid()?;
            let est = curves::monte_carlo(p, &t, config.n_traj, config.seed)?;
            let mut s = String::from("t,P1,P2,P3,stderr_P1,stderr_P2,stderr_P3\n");
            for i in 0..t.len() {
                let (m, e) = (est.mean[i], est.stderr[i]);
                csv_row(&mut s, &[t[i], m[0], m[1], m[2], e[0], e[1], e[2]]);
            }
            emit(config.out.as_deref(), &s, stdout)
        }
        Mode::Compare => run_compare(config, stdout),
        Mode::Limits => run_limits(config, stdout),
        Mode::Spectrum => {
            let mut ev = generator(p).eigenvalues()?;
            ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
            let mut s = String::from("index,re,im\n");
            for (k, z) in ev.iter().enumerate() {
                let _ = writeln!(s, "{k},{},{}", fmt_f64(z.re), fmt_f64(z.im));
            }
            emit(config.out.as_deref(), &s, stdout)
        }
        Mode::Fig1 => run_fig1(config, stdout),
        Mode::Fig2 => run_fig2(config, stdout),
    }
}

/// |mc − exact| in units of the standard error; a zero standard error only
/// tolerates rounding-level differences.
fn z_score(mc: f64, exact: f64, stderr: f64) -> f64 {
    let d = (mc - exact).abs();
    if stderr > 0.0 {
        d / stderr
    } else if d <= 1e-9 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn run_compare(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let p = &config.params;
    let t = config.t_grid()?;
    let a = curves::analytic(p, &t)?;
    let r = curves::resolvent(p, &t)?;
    let tb = curves::talbot(p, &t, config.talbot_nodes)?;
    let mc = curves::monte_carlo(p, &t, config.n_traj, config.seed)?;

    let mut s = String::from("t,P1_analytic,P1_resolvent,P1_talbot,P1_mc,stderr_mc,z_mc\n");
    let (mut d_ar, mut d_at, mut z_max) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..t.len() {
        let z = z_score(mc.mean[i][0], a[i][0], mc.stderr[i][0]);
        d_ar = d_ar.max((a[i][0] - r[i][0]).abs());
        d_at = d_at.max((a[i][0] - tb[i][0]).abs());
        z_max = z_max.max(z);
        csv_row(&mut s, &[t[i], a[i][0], r[i][0], tb[i][0], mc.mean[i][0], mc.stderr[i][0], z]);
    }
    emit(config.out.as_deref(), &s, stdout)?;

    let pass = d_ar <= TOL_ANALYTIC_RESOLVENT && d_at <= TOL_ANALYTIC_TALBOT && z_max <= TOL_Z_MC;
    writeln!(
        stdout,
        "max_disc_analytic_resolvent={} max_z_mc={} status={}",
        fmt_f64(d_ar),
        fmt_f64(z_max),
        if pass { "PASS" } else { "FAIL" }
    )?;
    writeln!(
        stdout,
        "max_disc_analytic_talbot={} tolerances: analytic_resolvent<={TOL_ANALYTIC_RESOLVENT:e} \
         analytic_talbot<={TOL_ANALYTIC_TALBOT:e} z_mc<={TOL_Z_MC}",
        fmt_f64(d_at)
    )?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Consistency(format!(
            "methods disagree: analytic/resolvent {d_ar:e}, analytic/talbot {d_at:e}, max z {z_max}"
        )))
    }
}

struct LimitColumns {
    exact: Vec<f64>,
    analytic: Vec<f64>,
    resolvent: Vec<f64>,
    talbot: Vec<f64>,
    mc: Vec<f64>,
}

impl LimitColumns {
    fn compute(p: &SystemParams, t: &[f64], nodes: usize, seed: u64, exact: Vec<f64>) -> Result<Self, CliError> {
        let first = |v: Vec<[f64; 3]>| v.iter().map(|x| x[0]).collect::<Vec<_>>();
        Ok(Self {
            exact,
            analytic: curves::analytic_p1(p, t)?,
            resolvent: first(curves::resolvent(p, t)?),
            talbot: first(curves::talbot(p, t, nodes)?),
            // without pulses a single trajectory is the ensemble; with pulses
            // but Δ = 0 every trajectory stays in level 1
            mc: curves::monte_carlo(p, t, 1, seed)?.p1(),
        })
    }

    /// (max deviation of the exact-arithmetic methods, of Talbot)
    fn deviations(&self) -> (f64, f64) {
        let dev = |v: &[f64]| {
            v.iter()
                .zip(&self.exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let exact = dev(&self.analytic).max(dev(&self.resolvent)).max(dev(&self.mc));
        (exact, dev(&self.talbot))
    }
}

fn run_limits(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let p = &config.params;
    let t = config.t_grid()?;
    let rabi_params = p.with_lambda(0.0)?;
    let rabi_exact: Vec<f64> = t.iter().map(|&x| rabi_p1(&rabi_params, x)).collect();
    let rabi = LimitColumns::compute(&rabi_params, &t, config.talbot_nodes, config.seed, rabi_exact)?;
    let frozen_params = p.with_delta(0.0)?;
    let frozen = LimitColumns::compute(&frozen_params, &t, config.talbot_nodes, config.seed, vec![1.0; t.len()])?;

    let mut s = String::from(
        "t,rabi_formula,rabi_analytic,rabi_resolvent,rabi_talbot,rabi_mc,\
         frozen_exact,frozen_analytic,frozen_resolvent,frozen_talbot,frozen_mc\n",
    );
    for i in 0..t.len() {
        csv_row(
            &mut s,
            &[
                t[i],
                rabi.exact[i],
                rabi.analytic[i],
                rabi.resolvent[i],
                rabi.talbot[i],
                rabi.mc[i],
                frozen.exact[i],
                frozen.analytic[i],
                frozen.resolvent[i],
                frozen.talbot[i],
                frozen.mc[i],
            ],
        );
    }
    emit(config.out.as_deref(), &s, stdout)?;

    let mut all_pass = true;
    for (name, cols) in [("rabi", &rabi), ("frozen", &frozen)] {
        let (dev, dev_talbot) = cols.deviations();
        let pass = dev <= TOL_LIMIT_EXACT && dev_talbot <= TOL_LIMIT_TALBOT;
        all_pass &= pass;
        writeln!(
            stdout,
            "limit={name} max_dev={} max_dev_talbot={} tol={TOL_LIMIT_EXACT:e} tol_talbot={TOL_LIMIT_TALBOT:e} status={}",
            fmt_f64(dev),
            fmt_f64(dev_talbot),
            if pass { "PASS" } else { "FAIL" }
        )?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Consistency("a limit deviates from its closed form".into()))
    }
}

fn preset_params(lambda: f64) -> Result<SystemParams, CliError> {
    Ok(SystemParams::new(DEFAULT_DELTA, DEFAULT_DEPS, lambda)?)
}

fn run_fig1(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let n = config.n_points;
    let mut s = String::from("lambda,t,lambda_t,P1,P1_minus_third\n");
    let mut params = Vec::new();
    for lam in FIG1_LAMBDAS {
        let p = preset_params(lam)?;
        params.push(p);
        let t = curves::time_grid(10.0 / lam, n, Spacing::Linear)?;
        let p1 = curves::analytic_p1(&p, &t)?;
        for (ti, pi) in t.iter().zip(&p1) {
            csv_row(&mut s, &[lam, *ti, lam * ti, *pi, pi - 1.0 / 3.0]);
        }
    }
    emit(config.out.as_deref(), &s, stdout)?;

    let collapse = collapse_check(&params)?;
    let _ = writeln!(
        stdout,
        "collapse_max_deviation={} on lambda_t in [2, 8]",
        fmt_f64(collapse.max_deviation)
    );
    for p in &params {
        let lam = p.lambda();
        let (a, b) = default_window(lam)?;
        let t = curves::time_grid(b, 4 * n, Spacing::Linear)?;
        let t: Vec<f64> = t.into_iter().filter(|&x| x >= a).collect();
        let p1 = curves::analytic_p1(p, &t)?;
        match fit_tail_rate(&t, &p1, (t[0], b)) {
            Ok(fit) => writeln!(stdout, "lambda={lam} tail_rate={} rate_over_lambda={}", fmt_f64(fit.rate), fmt_f64(fit.rate / lam))?,
            Err(e) => writeln!(stdout, "lambda={lam} tail_rate=none ({e})")?,
        }
    }
    if config.gnuplot {
        let out = config
            .out
            .as_deref()
            .ok_or_else(|| config_err("--gnuplot needs --out"))?;
        let gp = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset multiplot layout 1,3\n\
             set xlabel 't'\nplot for [l in '{l}'] '{f}' using 2:(column(1)==l+0 ? $4 : 1/0) with lines title 'lambda='.l\n\
             set xlabel 'lambda t'\nplot for [l in '{l}'] '{f}' using 3:(column(1)==l+0 ? $4 : 1/0) with lines title 'lambda='.l\n\
             set logscale y\nplot for [l in '{l}'] '{f}' using 3:(column(1)==l+0 && $5>0 ? $5 : 1/0) with lines title 'lambda='.l\n\
             unset multiplot\n",
            l = FIG1_LAMBDAS.map(|x| x.to_string()).join(" "),
            f = out.display()
        );
        fs::write(out.with_extension("gp"), gp)?;
    }
    Ok(())
}

fn fig2_paths(config: &RunConfig) -> (PathBuf, PathBuf, PathBuf) {
    let stem = config.out.clone().unwrap_or_else(|| PathBuf::from("fig2"));
    let stem = stem.with_extension("");
    let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let with = |suffix: &str| stem.with_file_name(format!("{name}{suffix}"));
    (with("_short.csv"), with("_long.csv"), with(".gp"))
}

fn run_fig2(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let p = preset_params(FIG2_LAMBDA)?;
    let (short_path, long_path, gp_path) = fig2_paths(config);

    let t = curves::time_grid(FIG2_SHORT_T_MAX, config.n_points, Spacing::Linear)?;
    let p1 = curves::analytic_p1(&p, &t)?;
    let mut s = String::from("t,P1,P1_rabi\n");
    let mut dev = 0.0f64;
    for (ti, pi) in t.iter().zip(&p1) {
        let r = rabi_p1(&p, *ti);
        dev = dev.max((pi - r).abs());
        csv_row(&mut s, &[*ti, *pi, r]);
    }
    fs::write(&short_path, s)?;

    let n_long = config.n_points.max(2000);
    let t = curves::time_grid(FIG2_LONG_T_MAX, n_long, Spacing::Linear)?;
    let p1 = curves::analytic_p1(&p, &t)?;
    let mut s = String::from("t,P1\n");
    for (ti, pi) in t.iter().zip(&p1) {
        csv_row(&mut s, &[*ti, *pi]);
    }
    fs::write(&long_path, s)?;
    writeln!(
        stdout,
        "short={} long={} max_dev_rabi_short={} final_P1={}",
        short_path.display(),
        long_path.display(),
        fmt_f64(dev),
        fmt_f64(p1[p1.len() - 1])
    )?;
    if config.gnuplot {
        let gp = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset multiplot layout 1,2\n\
             set xlabel 't'\nplot '{s}' using 1:2 with points title 'P1', '{s}' using 1:3 with lines title 'Rabi'\n\
             plot '{l}' using 1:2 with lines title 'P1', 1.0/3 title '1/3'\nunset multiplot\n",
            s = short_path.display(),
            l = long_path.display()
        );
        fs::write(gp_path, gp)?;
    }
    Ok(())
}

/// Entry point for the binary: parses, runs, reports, and returns the exit
/// code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    let result = resolve(args).and_then(|cfg| run(&cfg, &mut lock));
    let _ = lock.flush();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pulsed-rabi: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        let mut argv = vec!["pulsed-rabi"];
        argv.extend_from_slice(args);
        parse_config(argv)
    }

    #[test]
    fn defaults() {
        let c = parse(&["--lambda", "0.5"]).unwrap();
        assert_eq!(c.mode, Mode::Analytic);
        assert_eq!(c.params, SystemParams::new(1.0, 0.5, 0.5).unwrap());
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.n_traj, DEFAULT_N_TRAJ);
        assert_eq!(c.n_points, 200);
        assert_eq!(c.talbot_nodes, 64);
        assert_eq!(c.spacing, Spacing::Linear);
    }

    #[test]
    fn missing_lambda_names_the_key() {
        let e = parse(&["--mode", "analytic"]).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("lambda"));
        assert!(parse(&["--mode", "fig2"]).is_ok());
    }

    #[test]
    fn rabi_limit_is_valid() {
        let c = parse(&["--lambda", "0", "--mode", "analytic"]).unwrap();
        assert_eq!(c.params.lambda(), 0.0);
    }

    #[test]
    fn log_grid_flags() {
        let c = parse(&["--lambda", "0.1", "--spacing", "log", "--t-max", "1e4"]).unwrap();
        let g = c.t_grid().unwrap();
        assert_eq!(g.len(), 200);
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert_eq!(g[199], 1e4);
        assert!(g.windows(3).all(|w| ((w[2] / w[1]) / (w[1] / w[0]) - 1.0).abs() < 1e-9));
    }

    #[test]
    fn range_violations_name_key_and_range() {
        for (args, key) in [
            (vec!["--lambda", "-1"], "lambda"),
            (vec!["--lambda", "1", "--t-max", "0"], "t-max"),
            (vec!["--lambda", "1", "--n-points", "1"], "n-points"),
            (vec!["--lambda", "1", "--n-traj", "0"], "n-traj"),
            (vec!["--lambda", "1", "--talbot-nodes", "2"], "talbot-nodes"),
        ] {
            let e = parse(&args).unwrap_err();
            let msg = e.to_string();
            assert!(msg.contains(key) && msg.contains("range"), "{msg}");
            assert_eq!(e.exit_code(), 1);
        }
        assert_eq!(parse(&["--lambda", "abc"]).unwrap_err().exit_code(), 1);
        assert_eq!(parse(&["--bogus"]).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn config_text_parsing() {
        let m = parse_config_text("# comment\nlambda = 0.3\n\nt_max=5 # trailing\nmode = talbot\n").unwrap();
        assert_eq!(m["lambda"], "0.3");
        assert_eq!(m["t-max"], "5");
        let e = parse_config_text("lamda = 1").unwrap_err();
        assert!(e.to_string().contains("lamda"));
        assert!(parse_config_text("just words").is_err());
    }

    #[test]
    fn file_values_and_flag_override() {
        let dir = std::env::temp_dir().join(format!("pulsed-rabi-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        fs::write(&path, "lambda = 0.3\ndelta = 2\nmode = mc\nseed = 17\n").unwrap();
        let cfg = path.to_str().unwrap();
        let c = parse(&["--config", cfg]).unwrap();
        assert_eq!(c.mode, Mode::Mc);
        assert_eq!(c.params.delta(), 2.0);
        assert_eq!(c.seed, 17);
        let c = parse(&["--config", cfg, "--lambda", "0.9", "--mode", "talbot"]).unwrap();
        assert_eq!(c.params.lambda(), 0.9);
        assert_eq!(c.mode, Mode::Talbot);
        fs::write(&path, "lambda = fast\n").unwrap();
        let e = parse(&["--config", cfg]).unwrap_err();
        assert!(e.to_string().contains("lambda"));
        fs::write(&path, "mode = everything\nlambda = 1\n").unwrap();
        assert!(parse(&["--config", cfg]).unwrap_err().to_string().contains("mode"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0, -2.5e-7] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn z_scores() {
        assert_eq!(z_score(0.5, 0.5, 0.0), 0.0);
        assert_eq!(z_score(0.6, 0.5, 0.0), f64::INFINITY);
        assert!((z_score(0.6, 0.5, 0.05) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fig2_output_paths() {
        let mut c = parse(&["--mode", "fig2", "--out", "data/f2.csv"]).unwrap();
        let (s, l, g) = fig2_paths(&c);
        assert_eq!(s, PathBuf::from("data/f2_short.csv"));
        assert_eq!(l, PathBuf::from("data/f2_long.csv"));
        assert_eq!(g, PathBuf::from("data/f2.gp"));
        c.out = None;
        assert_eq!(fig2_paths(&c).0, PathBuf::from("fig2_short.csv"));
    }

    #[test]
    fn spectrum_rows() {
        let c = parse(&["--mode", "spectrum", "--lambda", "0.5"]).unwrap();
        let mut buf = Vec::new();
        run(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,re,im");
        assert_eq!(lines.len(), 10);
        let first: Vec<f64> = lines[1].split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(first[0].abs() < 1e-12 && first[1].abs() < 1e-12);
    }
}
