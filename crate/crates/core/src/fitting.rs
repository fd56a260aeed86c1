//! Least-squares fits of correlograms to raw and sampling-corrected kernel
//! families, and the χ² comparison between them.

use std::fmt;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::async_theory::exp_convolution;
use crate::error::{Error, Result};
use crate::estimation::Correlogram;
use crate::jet::{divided_difference as dd, divided_difference_da as dd_da, Jet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CrossRaw,
    CrossAsync,
    AutoRaw,
    AutoAsync,
}

impl Family {
    pub fn is_auto(self) -> bool {
        matches!(self, Family::AutoRaw | Family::AutoAsync)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::CrossRaw => "cross_raw",
            Family::CrossAsync => "cross_async",
            Family::AutoRaw => "auto_raw",
            Family::AutoAsync => "auto_async",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cross_raw" => Family::CrossRaw,
            "cross_async" => Family::CrossAsync,
            "auto_raw" => Family::AutoRaw,
            "auto_async" => Family::AutoAsync,
            other => return Err(Error::InvalidArgument(format!("unknown fit family `{other}`"))),
        })
    }
}

/// Fitted parameters: `(c, τ₀, ξ)` for cross families, `(a, b, ξ)` for auto
/// families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub params: [f64; 3],
    pub stderr: [f64; 3],
    pub chi2: f64,
    pub n_points: usize,
    /// Amplitude not significant (|t| < 2): lag and width are unidentified.
    pub degenerate: bool,
    pub iterations: usize,
    /// True when per-lag inverse-variance weights were used.
    pub weighted: bool,
}

impl FitResult {
    pub fn c(&self) -> f64 {
        self.params[0]
    }

    pub fn tau(&self) -> f64 {
        if self.family.is_auto() {
            0.0
        } else {
            self.params[1]
        }
    }

    pub fn xi(&self) -> f64 {
        self.params[2]
    }

    pub fn a(&self) -> f64 {
        self.params[0]
    }

    pub fn b(&self) -> f64 {
        self.params[1]
    }
}

/// Model of one family evaluated on a lag grid with bin width `dt`, in the
/// internal parametrisation `(p0, p1, ln ξ)`.
#[derive(Debug, Clone, Copy)]
pub struct FitModel {
    pub family: Family,
    pub theta_i: f64,
    pub theta_j: f64,
    pub dt: f64,
}

/// `ξ/(2(ξ+θ)) · f[ξ, θ]` with `f(x) = e^{−y/x}` and its `ξ`-derivative: the
/// regular part of a sampled auto kernel per unit exponential weight.
fn auto_regular(y: f64, xi: f64, theta: f64) -> (f64, f64) {
    let f = |x: Jet| (Jet::constant(-y) / x).exp();
    let g = dd(f, xi, theta);
    let gx = dd_da(f, xi, theta);
    let s = xi + theta;
    (xi / (2.0 * s) * g, theta / (2.0 * s * s) * g + xi / (2.0 * s) * gx)
}

impl FitModel {
    pub fn new(family: Family, lambda_i: f64, lambda_j: f64, dt: f64) -> Result<Self> {
        let th = |l: f64| -> Result<f64> {
            if !(l > 0.0) {
                return Err(Error::InvalidArgument(format!("rate must be > 0, got {l}")));
            }
            Ok(1.0 / l)
        };
        let (theta_i, theta_j) = match family {
            Family::CrossRaw | Family::AutoRaw => (0.0, 0.0),
            Family::CrossAsync => (th(lambda_i)?, th(lambda_j)?),
            Family::AutoAsync => (th(lambda_i)?, th(lambda_i)?),
        };
        Ok(FitModel { family, theta_i, theta_j, dt })
    }

    /// Value and gradient with respect to `(p0, p1, ln ξ)` at lag `tau`.
    pub fn eval(&self, tau: f64, p: &[f64; 3]) -> (f64, [f64; 3]) {
        let xi = p[2].exp();
        match self.family {
            Family::CrossRaw | Family::CrossAsync => {
                let (c, t0) = (p[0], p[1]);
                let (h, hy, hx) = exp_convolution(tau - t0, xi, self.theta_i, self.theta_j);
                (c * h, [h, -c * hy, c * hx * xi])
            }
            Family::AutoRaw | Family::AutoAsync => {
                let (a, b) = (p[0], p[1]);
                let th = self.theta_i;
                let (r, rx) = auto_regular(tau.abs(), xi, th);
                let mut v = -b * self.dt * r;
                let mut g = [0.0, -self.dt * r, -b * self.dt * rx * xi];
                if tau.abs() < 0.5 * self.dt {
                    let w = th / (th + xi);
                    v += a - b * w;
                    g[0] = 1.0;
                    g[1] -= w;
                    g[2] += b * th / ((th + xi) * (th + xi)) * xi;
                }
                (v, g)
            }
        }
    }
}

/// Per-lag weighting of residuals.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// Inverse across-day variance with at least 5 days, uniform otherwise.
    Auto,
    Uniform,
    /// Known standard deviation per lag.
    Sigma(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub weights: Weights,
    /// Starting point in external parameters; derived from the data if absent.
    pub init: Option<[f64; 3]>,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { weights: Weights::Auto, init: None, max_iterations: 200, step_tolerance: 1e-10 }
    }
}

const MIN_DAYS_FOR_WEIGHTS: usize = 5;

fn resolve_weights(cg: &Correlogram, w: &Weights) -> Result<(Vec<f64>, bool)> {
    let n = cg.values.len();
    match w {
        Weights::Uniform => Ok((vec![1.0; n], false)),
        Weights::Auto => {
            let usable = cg.n_days >= MIN_DAYS_FOR_WEIGHTS && cg.stderr.iter().all(|s| s.is_finite() && *s > 0.0);
            if usable {
                Ok((cg.stderr.iter().map(|s| 1.0 / (s * s)).collect(), true))
            } else {
                Ok((vec![1.0; n], false))
            }
        }
        Weights::Sigma(s) => {
            if s.len() != n {
                return Err(Error::LengthMismatch(format!("{} sigmas for {n} lags", s.len())));
            }
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument("sigmas must be > 0".into()));
            }
            Ok((s.iter().map(|v| 1.0 / (v * v)).collect(), true))
        }
    }
}

struct Problem<'a> {
    model: FitModel,
    tau: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    fn chi2(&self, p: &[f64; 3]) -> f64 {
        self.tau
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| {
                let r = y - self.model.eval(t, p).0;
                w * r * r
            })
            .sum()
    }

    fn normal_equations(&self, p: &[f64; 3]) -> (Matrix3<f64>, Vector3<f64>, f64) {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        let mut chi2 = 0.0;
        for ((&t, &y), &w) in self.tau.iter().zip(self.y).zip(&self.w) {
            let (f, g) = self.model.eval(t, p);
            let g = Vector3::from(g);
            let r = y - f;
            jtj += w * g * g.transpose();
            jtr += w * r * g;
            chi2 += w * r * r;
        }
        (jtj, jtr, chi2)
    }
}

fn to_internal(p: [f64; 3]) -> [f64; 3] {
    [p[0], p[1], p[2].max(1e-12).ln()]
}

fn finish(problem: &Problem, family: Family, q: [f64; 3], iterations: usize, weighted: bool) -> FitResult {
    let (jtj, _, chi2) = problem.normal_equations(&q);
    let n = problem.y.len();
    let dof = n.saturating_sub(3).max(1) as f64;
    let scale = if weighted { 1.0 } else { chi2 / dof };
    let cov = jtj.try_inverse();
    let xi = q[2].exp();
    let sd = |v: f64| if v > 0.0 && v.is_finite() { v.sqrt() } else { f64::INFINITY };
    let stderr = match cov {
        Some(c) => [sd(c[(0, 0)] * scale), sd(c[(1, 1)] * scale), xi * sd(c[(2, 2)] * scale)],
        None => [f64::INFINITY; 3],
    };
    let amp = if family.is_auto() { 1 } else { 0 };
    let t = q[amp].abs() / stderr[amp];
    FitResult { family, params: [q[0], q[1], xi], stderr, chi2, n_points: n, degenerate: !(t >= 2.0), iterations, weighted }
}

fn levenberg_marquardt(problem: &Problem, family: Family, start: [f64; 3], opts: &FitOptions, weighted: bool) -> Result<FitResult> {
    let mut q = to_internal(start);
    let (mut jtj, mut jtr, mut chi2) = problem.normal_equations(&q);
    let mut mu = 1e-3;
    for it in 1..=opts.max_iterations {
        let floor = 1e-12 * jtj.diagonal().max();
        let mut damped = jtj;
        for k in 0..3 {
            damped[(k, k)] += mu * (jtj[(k, k)] + floor);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
            mu *= 10.0;
            continue;
        };
        let trial = [q[0] + step[0], q[1] + step[1], q[2] + step[2]];
        let trial_chi2 = problem.chi2(&trial);
        let small = (0..3).all(|k| step[k].abs() <= opts.step_tolerance * (q[k].abs() + opts.step_tolerance));
        if trial_chi2.is_finite() && trial_chi2 <= chi2 {
            q = trial;
            (jtj, jtr, chi2) = problem.normal_equations(&q);
            mu = (mu / 10.0).max(1e-15);
            if small {
                return Ok(finish(problem, family, q, it, weighted));
            }
        } else {
            mu *= 10.0;
            if mu > 1e20 || small {
                return Ok(finish(problem, family, q, it, weighted));
            }
        }
    }
    let best = finish(problem, family, q, opts.max_iterations, weighted);
    if best.degenerate {
        return Ok(best);
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, chi2: best.chi2, best: Box::new(best) })
}

fn check_points(cg: &Correlogram) -> Result<()> {
    if cg.values.len() < 10 {
        return Err(Error::InsufficientData(format!("{} lag points, need at least 10", cg.values.len())));
    }
    if cg.values.len() != cg.lag_grid.len() {
        return Err(Error::LengthMismatch("lag grid and values differ in length".into()));
    }
    Ok(())
}

/// Peak location/height and half-width start for the exponential cross fit.
fn cross_start(cg: &Correlogram) -> [f64; 3] {
    let (k, peak) = cg.values.iter().copied().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap_or((0, 0.0));
    let dt = cg.grid_dt().abs();
    let half = peak.abs() / 2.0;
    let reach = |dir: i64| {
        let mut j = k as i64;
        while j + dir >= 0 && ((j + dir) as usize) < cg.values.len() && cg.values[(j + dir) as usize].abs() > half {
            j += dir;
        }
        (j - k as i64).unsigned_abs() as f64 + 0.5
    };
    let hwhm = 0.5 * (reach(1) + reach(-1)) * dt;
    [peak, cg.lag_grid[k], (hwhm / std::f64::consts::LN_2).max(0.5 * dt)]
}

fn auto_start(cg: &Correlogram) -> [f64; 3] {
    let m = cg.max_lag() as i64;
    let dt = cg.grid_dt().abs();
    let v = |k: i64| 0.5 * (cg.at_lag(k) + cg.at_lag(-k));
    let (v1, v2) = (v(1.min(m)), v(2.min(m)));
    let xi = if v1 * v2 > 0.0 && v2.abs() < v1.abs() { dt / (v1 / v2).ln() } else { dt };
    let b = -v1 * 2.0 * xi / (dt * (-dt / xi).exp());
    [v(0) + b * dt / (2.0 * xi), b, xi]
}

/// Fits `family` to the correlogram. Rates are needed by the corrected
/// families (`lambda_j` is ignored for auto fits).
pub fn fit(cg: &Correlogram, family: Family, lambda_i: f64, lambda_j: f64, opts: &FitOptions) -> Result<FitResult> {
    check_points(cg)?;
    let model = FitModel::new(family, lambda_i, lambda_j, cg.grid_dt().abs())?;
    let (w, weighted) = resolve_weights(cg, &opts.weights)?;
    let problem = Problem { model, tau: &cg.lag_grid, y: &cg.values, w };
    let start = match (opts.init, family) {
        (Some(p), _) => p,
        (None, Family::CrossRaw) => cross_start(cg),
        (None, Family::AutoRaw) => auto_start(cg),
        (None, Family::CrossAsync) => match fit(cg, Family::CrossRaw, lambda_i, lambda_j, opts) {
            Ok(r) if !r.degenerate => r.params,
            _ => cross_start(cg),
        },
        (None, Family::AutoAsync) => match fit(cg, Family::AutoRaw, lambda_i, lambda_j, opts) {
            Ok(r) if r.params.iter().all(|v| v.is_finite()) => r.params,
            _ => auto_start(cg),
        },
    };
    levenberg_marquardt(&problem, family, start, opts, weighted)
}

/// `c e^{−|τ−τ₀|/ξ}`.
pub fn fit_cross_raw(cg: &Correlogram) -> Result<FitResult> {
    fit(cg, Family::CrossRaw, 1.0, 1.0, &FitOptions::default())
}

/// `c e^{−|τ−τ₀|/ξ}` convolved with the sampling kernel of rates `(λ_i, λ_j)`.
pub fn fit_cross_async(cg: &Correlogram, lambda_i: f64, lambda_j: f64) -> Result<FitResult> {
    fit(cg, Family::CrossAsync, lambda_i, lambda_j, &FitOptions::default())
}

/// `a δ(τ) − b e^{−|τ|/ξ}/(2ξ)`, the `τ = 0` bin holding the delta mass.
pub fn fit_auto_raw(cg: &Correlogram) -> Result<FitResult> {
    fit(cg, Family::AutoRaw, 1.0, 1.0, &FitOptions::default())
}

/// The auto kernel above after sampling at rate `lambda`.
pub fn fit_auto_async(cg: &Correlogram, lambda: f64) -> Result<FitResult> {
    fit(cg, Family::AutoAsync, lambda, lambda, &FitOptions::default())
}

/// `χ²_raw / χ²_async − 1`.
pub fn chi2_ratio(raw: &FitResult, asyn: &FitResult) -> Result<f64> {
    if raw.n_points != asyn.n_points {
        return Err(Error::LengthMismatch(format!("fits on {} and {} points", raw.n_points, asyn.n_points)));
    }
    if !(asyn.chi2 > 0.0) {
        return Err(Error::DegenerateVariance(format!("corrected-model chi2 is {}", asyn.chi2)));
    }
    Ok(raw.chi2 / asyn.chi2 - 1.0)
}

/// Model values on the correlogram's lags for a finished fit.
pub fn model_values(cg: &Correlogram, r: &FitResult, lambda_i: f64, lambda_j: f64) -> Result<Vec<f64>> {
    let model = FitModel::new(r.family, lambda_i, lambda_j, cg.grid_dt().abs())?;
    let q = to_internal(r.params);
    Ok(cg.lag_grid.iter().map(|&t| model.eval(t, &q).0).collect())
}

pub const FIT_CSV_HEADER: [&str; 14] =
    ["i", "j", "family", "c", "tau", "xi", "stderr_c", "stderr_tau", "stderr_xi", "chi2", "n_points", "b", "stderr_b", "degenerate"];

/// Writes one row per `(i, j, fit)`; auto rows put `a` in the `c` column and
/// `b` in its own columns. Unidentified lag/width of degenerate fits are blank.
pub fn write_fit_csv<W: Write>(w: W, rows: &[(String, String, FitResult)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIT_CSV_HEADER)?;
    for (i, j, r) in rows {
        let num = |v: f64| if v.is_finite() { format!("{v}") } else { String::new() };
        let hide = |v: f64| if r.degenerate { String::new() } else { num(v) };
        let (tau, se_tau, b, se_b) = if r.family.is_auto() {
            ("0".to_string(), "0".to_string(), num(r.params[1]), num(r.stderr[1]))
        } else {
            (hide(r.params[1]), hide(r.stderr[1]), String::new(), String::new())
        };
        out.write_record([
            i.clone(),
            j.clone(),
            r.family.to_string(),
            num(r.params[0]),
            tau,
            hide(r.params[2]),
            num(r.stderr[0]),
            se_tau,
            hide(r.stderr[2]),
            num(r.chi2),
            r.n_points.to_string(),
            b,
            se_b,
            r.degenerate.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
