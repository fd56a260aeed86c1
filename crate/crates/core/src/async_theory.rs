//! Predictions for previous-tick series sampled at Poisson times.
//!
//! Rates enter through the mean waiting time `θ = 1/λ`, with `θ = 0` standing
//! for an infinite rate (synchronous observation). Every closed form is a
//! combination of divided differences in `θ`, which keeps the removable
//! singularity at `λξ = 1` harmless.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::jet::{divided_difference as dd, divided_difference_da as dd_da, Jet};
use crate::kernels::{self, pearson, CorrelationModel, ModelPair};
use crate::quadrature;

/// Sampling rates of the two assets; `f64::INFINITY` marks a synchronous asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncKernel {
    pub lambda_i: f64,
    pub lambda_j: f64,
}

fn check_rate(l: f64) -> Result<()> {
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling rate must be > 0, got {l}")));
    }
    Ok(())
}

impl AsyncKernel {
    pub fn new(lambda_i: f64, lambda_j: f64) -> Result<Self> {
        check_rate(lambda_i)?;
        check_rate(lambda_j)?;
        Ok(AsyncKernel { lambda_i, lambda_j })
    }

    pub fn synchronous() -> Self {
        AsyncKernel { lambda_i: f64::INFINITY, lambda_j: f64::INFINITY }
    }

    pub fn theta_i(&self) -> f64 {
        1.0 / self.lambda_i
    }

    pub fn theta_j(&self) -> f64 {
        1.0 / self.lambda_j
    }

    pub fn swapped(&self) -> Self {
        AsyncKernel { lambda_i: self.lambda_j, lambda_j: self.lambda_i }
    }
}

/// `u = 1 + λξ`, `v = −1 + λξ` for each asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormCoefs {
    pub u_i: f64,
    pub v_i: f64,
    pub u_j: f64,
    pub v_j: f64,
}

impl ClosedFormCoefs {
    pub fn new(k: &AsyncKernel, xi: f64) -> Self {
        let (li, lj) = (k.lambda_i * xi, k.lambda_j * xi);
        ClosedFormCoefs { u_i: 1.0 + li, v_i: -1.0 + li, u_j: 1.0 + lj, v_j: -1.0 + lj }
    }

    /// True when a `v` coefficient is close enough to 0 that the naive
    /// formulas would lose most digits.
    pub fn near_singular(&self) -> bool {
        self.v_i.abs() < 1e-3 || self.v_j.abs() < 1e-3
    }
}

/// `K(ω) = λ_iλ_j / ((λ_i + iω)(λ_j − iω))`.
pub fn lorentz_kernel(k: &AsyncKernel, omega: f64) -> Complex64 {
    let a = Complex64::new(1.0, omega * k.theta_i());
    let b = Complex64::new(1.0, -omega * k.theta_j());
    (a * b).inv()
}

/// Density of the delay difference whose transform is [`lorentz_kernel`]:
/// `e^{−y/θ_j}/(θ_i+θ_j)` for `y ≥ 0`, `e^{y/θ_i}/(θ_i+θ_j)` for `y < 0`.
/// Zero when both rates are infinite (the kernel is then a delta).
pub fn delay_density(k: &AsyncKernel, y: f64) -> f64 {
    let (ti, tj) = (k.theta_i(), k.theta_j());
    let s = ti + tj;
    if s == 0.0 {
        return 0.0;
    }
    let (dist, theta) = if y > 0.0 || (y == 0.0 && tj > 0.0) { (y, tj) } else { (-y, ti) };
    if theta == 0.0 {
        return 0.0;
    }
    (-dist / theta).exp() / s
}

/// `h(y) = ∫ e^{−|v|/ξ} k(y − v) dv` with `k` the [`delay_density`], and its
/// partial derivatives `(h, ∂h/∂y, ∂h/∂ξ)`. `ξ` must be positive.
pub fn exp_convolution(y: f64, xi: f64, theta_i: f64, theta_j: f64) -> (f64, f64, f64) {
    if y < 0.0 {
        let (h, hy, hx) = exp_convolution(-y, xi, theta_j, theta_i);
        return (h, -hy, hx);
    }
    let (ti, tj) = (theta_i, theta_j);
    let tail = if tj == 0.0 { 0.0 } else { tj * tj * (-y / tj).exp() / ((ti + tj) * (xi + tj)) };
    let f = |x: Jet| x.powi(2) * (Jet::constant(-y) / x).exp() / (x + ti);
    let fy = |x: Jet| -(x * (Jet::constant(-y) / x).exp() / (x + ti));
    let h = dd(f, xi, tj) - tail;
    let hy = dd(fy, xi, tj) + if tj == 0.0 { 0.0 } else { tail / tj };
    let hx = dd_da(f, xi, tj) + tail / (xi + tj);
    (h, hy, hx)
}

/// Delta weight surviving in the sampled cross kernel (nonzero only when both
/// assets are observed synchronously).
pub fn async_cross_delta(model: &CorrelationModel, k: &AsyncKernel) -> f64 {
    if k.theta_i() + k.theta_j() == 0.0 {
        model.parts().0
    } else {
        0.0
    }
}

/// Regular part of the sampled cross kernel `c̃(τ) = (c ∗ k)(τ)`.
pub fn async_cross_corr(model: &CorrelationModel, k: &AsyncKernel, tau: f64) -> f64 {
    let (a, b, xi) = model.parts();
    let y = tau - model.lag;
    let mut out = a * delay_density(k, y);
    if b != 0.0 {
        out += b * exp_convolution(y, xi, k.theta_i(), k.theta_j()).0 / (2.0 * xi);
    }
    out
}

fn quartic_weight(y: f64, p: f64, xi: f64) -> impl Fn(Jet) -> Jet {
    move |t: Jet| t.powi(4) * (Jet::constant(-y) / t).exp() / ((t + p) * (t + xi))
}

/// Sampled covariance of a unit-weight component (`δ(τ−lag)` when `xi = 0`,
/// `e^{−|τ−lag|/ξ}/(2ξ)` otherwise) over horizon `dt`.
fn component_covariance(dt: f64, lag: f64, xi: f64, ti: f64, tj: f64) -> f64 {
    if lag < 0.0 {
        return component_covariance(dt, -lag, xi, tj, ti);
    }
    if dt == 0.0 {
        return 0.0;
    }
    let e = |y: f64, p: f64| quartic_weight(y, p, xi);
    if dt > lag {
        let x = dt - lag;
        let m = |t: Jet| e(lag, tj)(t).scale(2.0) - e(dt + lag, tj)(t);
        let h = e(x, ti);
        x + ti - tj - dd(m, ti, xi) + dd(h, tj, xi)
    } else {
        let n = |t: Jet| e(lag, tj)(t).scale(2.0) - e(lag - dt, tj)(t) - e(lag + dt, tj)(t);
        -dd(n, ti, xi)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be finite and >= 0, got {dt}")));
    }
    Ok(())
}

/// Covariance of previous-tick returns over horizon `dt`, in closed form.
pub fn async_covariance(model: &CorrelationModel, k: &AsyncKernel, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    model.validate()?;
    let (a, b, xi) = model.parts();
    let (ti, tj) = (k.theta_i(), k.theta_j());
    let mut out = a * component_covariance(dt, model.lag, 0.0, ti, tj);
    if b != 0.0 {
        out += b * component_covariance(dt, model.lag, xi, ti, tj);
    }
    Ok(out)
}

const MAX_PANELS: usize = 20_000;

/// Same quantity by direct frequency integration of the substituted spectrum,
/// `(1/π) ∫₀^∞ Re[S(ω)K(ω)] 4 sin²(ωΔt/2)/ω² dω`, truncated at
/// `50·max(λ, 1/ξ, 1/Δt)` with the remainder taken at its mean value.
pub fn async_covariance_quadrature(model: &CorrelationModel, k: &AsyncKernel, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    model.validate()?;
    if dt == 0.0 {
        return Ok(0.0);
    }
    let sk = |w: f64| (kernels::spectrum_eval(model, w) * lorentz_kernel(k, w)).re;
    let mut scale = 1.0 / dt;
    for l in [k.lambda_i, k.lambda_j] {
        if l.is_finite() {
            scale = scale.max(l);
        }
    }
    if model.width > 0.0 {
        scale = scale.max(1.0 / model.width);
    }
    if model.lag != 0.0 {
        scale = scale.max(1.0 / model.lag.abs());
    }
    let w_max = 50.0 * scale;
    let fejer = |w: f64| {
        let half = 0.5 * w * dt;
        if half.abs() < 1e-8 {
            dt * dt
        } else {
            (half.sin() / (0.5 * w)).powi(2)
        }
    };
    let mag = model.delta_weight.abs() + model.exp_weight.abs();
    let tol = 1e-13 * mag * dt;
    let period = 2.0 * std::f64::consts::PI / dt.max(model.lag.abs());
    let panels = ((w_max / period).ceil() as usize).clamp(1, MAX_PANELS);
    let width = w_max / panels as f64;
    let body: f64 = (0..panels)
        .map(|p| {
            let lo = p as f64 * width;
            quadrature::integrate(|w| sk(w) * fejer(w), lo, lo + width, tol / panels as f64)
        })
        .sum();
    let tail = 2.0 / w_max * quadrature::integrate(|s| sk(w_max / s), 0.0, 1.0, tol);
    Ok((body + tail) / std::f64::consts::PI)
}

/// Variance of previous-tick returns of an asset with auto kernel `model` and
/// sampling rate `lambda` over horizon `dt`.
pub fn async_variance(model: &CorrelationModel, lambda: f64, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    check_rate(lambda)?;
    check_auto(model)?;
    let (a, b, xi) = model.parts();
    let mut out = a * dt;
    if b != 0.0 {
        let theta = 1.0 / lambda;
        let decay = |t: Jet| (Jet::constant(-dt) / t).exp();
        out += b * (dt + xi * ((-dt / xi).exp() - 1.0));
        out += b * theta * theta * xi / (xi + theta) * dd(decay, xi, theta);
    }
    Ok(out)
}

fn check_auto(model: &CorrelationModel) -> Result<()> {
    model.validate()?;
    if model.lag != 0.0 {
        return Err(Error::InvalidModel(format!("auto kernel with nonzero lag {}", model.lag)));
    }
    Ok(())
}

/// Sampled auto kernel: weight of the `δ(τ)` term and regular part at `tau`.
pub fn async_autocorr(model: &CorrelationModel, lambda: f64, tau: f64) -> Result<(f64, f64)> {
    check_rate(lambda)?;
    check_auto(model)?;
    let (a, b, xi) = model.parts();
    if b == 0.0 {
        return Ok((a, 0.0));
    }
    let theta = 1.0 / lambda;
    let y = tau.abs();
    let decay = |t: Jet| (Jet::constant(-y) / t).exp();
    let delta = a + b * theta / (theta + xi);
    let regular = b * xi / (2.0 * (xi + theta)) * dd(decay, xi, theta);
    Ok((delta, regular))
}

/// Finite-grid sampling factor at frequency index `n` of a length-`t_len`
/// series, with `Λ = λ·grid_dt` the per-cell tick intensities:
/// `q_i/(1 − r_i e^{−iω_n}) · q_j/(1 − r_j e^{iω_n})`, `q = 1 − e^{−Λ}`,
/// `r = e^{−Λ}`, `ω_n = 2πn/T`.
pub fn discrete_kernel(cap_lambda_i: f64, cap_lambda_j: f64, n: usize, t_len: usize) -> Result<Complex64> {
    if t_len < 2 || n >= t_len {
        return Err(Error::InvalidArgument(format!("frequency index {n} outside 0..{t_len}")));
    }
    check_rate(cap_lambda_i)?;
    check_rate(cap_lambda_j)?;
    let k = if 2 * n <= t_len { n as f64 } else { n as f64 - t_len as f64 };
    let w = 2.0 * std::f64::consts::PI * k / t_len as f64;
    Ok(discrete_factor(cap_lambda_i, -w) * discrete_factor(cap_lambda_j, w))
}

fn discrete_factor(cap_lambda: f64, w: f64) -> Complex64 {
    let r = (-cap_lambda).exp();
    let q = -(-cap_lambda).exp_m1();
    Complex64::new(q, 0.0) / (Complex64::new(1.0, 0.0) - Complex64::from_polar(r, w))
}

/// Sampled Pearson curve at horizon `dt`.
pub fn async_rho(pair: &ModelPair, k: &AsyncKernel, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    pearson(
        async_covariance(&pair.cross, k, dt)?,
        async_variance(&pair.auto_i, k.lambda_i, dt)?,
        async_variance(&pair.auto_j, k.lambda_j, dt)?,
    )
}

/// Covariance `⟨ΔX^i_k ΔX^j_{k+m}⟩` of synchronous grid increments.
pub fn increment_covariance(model: &CorrelationModel, grid_dt: f64, m: i64) -> f64 {
    let c = |k: i64| {
        let dt = k as f64 * grid_dt;
        kernels::sync_covariance(&CorrelationModel { lag: model.lag - dt, ..*model }, grid_dt).unwrap_or(0.0)
    };
    c(m)
}

/// Expected circular correlogram `(1/T)Σ_t z̃^i_t z̃^j_{t+m}` of previous-tick
/// grid increments for lags `−max_lag..=max_lag`, from the discrete model
/// spectrum times the finite-grid sampling factor.
pub fn discrete_cross_prediction(
    model: &CorrelationModel,
    rates: &AsyncKernel,
    grid_dt: f64,
    t_len: usize,
    max_lag: usize,
) -> Result<Vec<f64>> {
    if t_len < 2 || 2 * max_lag >= t_len {
        return Err(Error::InvalidArgument(format!("max_lag {max_lag} too large for length {t_len}")));
    }
    let mut buf: Vec<Complex64> = (0..t_len)
        .map(|idx| {
            let m = if idx <= t_len / 2 { idx as i64 } else { idx as i64 - t_len as i64 };
            Complex64::new(increment_covariance(model, grid_dt, m), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(t_len).process(&mut buf);
    let (li, lj) = (rates.lambda_i * grid_dt, rates.lambda_j * grid_dt);
    for (n, v) in buf.iter_mut().enumerate() {
        *v *= discrete_kernel(li, lj, n, t_len)?;
    }
    planner.plan_fft_forward(t_len).process(&mut buf);
    let t = t_len as f64;
    Ok((-(max_lag as i64)..=max_lag as i64).map(|m| buf[m.rem_euclid(t_len as i64) as usize].re / t).collect())
}
