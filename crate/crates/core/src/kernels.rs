//! Synchronous correlation models: lagged kernels `c(τ)`, spectra `S(ω)` and
//! finite-horizon covariance and Pearson curves.
//!
//! Time convention: `c^{ij}(τ) = ⟨dX^i_t dX^j_{t+τ}⟩` and `S(ω) = ∫ c(τ) e^{iωτ} dτ`,
//! so a kernel centred at a positive lag means asset `i` leads asset `j`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// `c(τ) = a δ(τ − lag) + b e^{−|τ−lag|/ξ} / (2ξ)`; `ξ = 0` turns the second
/// term into a second delta of weight `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationModel {
    #[serde(default)]
    pub delta_weight: f64,
    #[serde(default)]
    pub lag: f64,
    #[serde(default)]
    pub width: f64,
    #[serde(default)]
    pub exp_weight: f64,
}

impl CorrelationModel {
    /// Correlated Brownian motion: `c δ(τ)`.
    pub fn brownian(c: f64) -> Self {
        CorrelationModel { delta_weight: c, lag: 0.0, width: 0.0, exp_weight: 0.0 }
    }

    /// `c δ(τ − lag)`.
    pub fn lagged_delta(c: f64, lag: f64) -> Self {
        CorrelationModel { delta_weight: c, lag, width: 0.0, exp_weight: 0.0 }
    }

    /// `c e^{−|τ−lag|/ξ} / (2ξ)`.
    pub fn exponential(c: f64, width: f64, lag: f64) -> Self {
        CorrelationModel { delta_weight: 0.0, lag, width, exp_weight: c }
    }

    /// Brownian part `a` minus a fast exponential `b`, the auto-kernel shape
    /// `a δ(τ) − b e^{−|τ|/ξ}/(2ξ)`.
    pub fn auto(a: f64, b: f64, width: f64) -> Self {
        CorrelationModel { delta_weight: a, lag: 0.0, width, exp_weight: -b }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta_weight, self.lag, self.width, self.exp_weight].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel(format!("non-finite parameter in {self:?}")));
        }
        if self.width < 0.0 {
            return Err(Error::InvalidModel(format!("negative width {}", self.width)));
        }
        Ok(())
    }

    /// Checks the conditions for an auto-kernel: zero lag and a nonnegative spectrum.
    pub fn validate_auto(&self) -> Result<()> {
        self.validate()?;
        if self.lag != 0.0 {
            return Err(Error::InvalidModel(format!("auto kernel with nonzero lag {}", self.lag)));
        }
        // S(ω) = a + b/(1+ω²ξ²) ranges over [a, a+b] (or its reverse)
        let (a, b, _) = self.parts();
        if a < 0.0 || a + b < 0.0 {
            return Err(Error::InvalidModel(format!("auto spectrum takes negative values (a={a}, b={b})")));
        }
        if a + b == 0.0 && a == 0.0 {
            return Err(Error::InvalidModel("auto kernel is identically zero".into()));
        }
        Ok(())
    }

    /// `(a, b, ξ)` with a zero-width exponential folded into the delta weight.
    pub fn parts(&self) -> (f64, f64, f64) {
        if self.width == 0.0 {
            (self.delta_weight + self.exp_weight, 0.0, 0.0)
        } else {
            (self.delta_weight, self.exp_weight, self.width)
        }
    }

    /// `∫ c(τ) dτ`, the long-horizon covariance slope.
    pub fn total_mass(&self) -> f64 {
        self.delta_weight + self.exp_weight
    }

    /// Second antiderivative of the kernel, `Φ'' = c`, with `Φ` even about `lag`.
    fn phi(&self, u: f64) -> f64 {
        let (a, b, xi) = self.parts();
        let v = (u - self.lag).abs();
        let mut out = a * v / 2.0;
        if b != 0.0 {
            out += b * (v / 2.0 + xi / 2.0 * (-v / xi).exp());
        }
        out
    }
}

/// Delta weight (located at `model.lag`) and regular density at `tau`.
pub fn kernel_eval(model: &CorrelationModel, tau: f64) -> (f64, f64) {
    let (a, b, xi) = model.parts();
    if xi == 0.0 {
        return (a, 0.0);
    }
    (a, b * (-(tau - model.lag).abs() / xi).exp() / (2.0 * xi))
}

/// `S(ω) = e^{iω·lag} (a + b/(1+ω²ξ²))`.
pub fn spectrum_eval(model: &CorrelationModel, omega: f64) -> Complex64 {
    let (a, b, xi) = model.parts();
    let mag = a + b / (1.0 + omega * omega * xi * xi);
    Complex64::from_polar(1.0, omega * model.lag) * mag
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be finite and >= 0, got {dt}")));
    }
    Ok(())
}

/// `C(Δt) = ∫₀^Δt ∫₀^Δt c(t' − t) dt dt'`, in closed form.
pub fn sync_covariance(model: &CorrelationModel, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    Ok(model.phi(dt) - 2.0 * model.phi(0.0) + model.phi(-dt))
}

/// Same double integral by 2-D adaptive quadrature of the regular part, with the
/// delta ridge integrated exactly.
pub fn sync_covariance_quadrature(model: &CorrelationModel, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let (a, b, xi) = model.parts();
    let ridge = a * (dt - model.lag.abs()).max(0.0);
    if b == 0.0 || dt == 0.0 {
        return Ok(ridge);
    }
    let lag = model.lag;
    let tol = 1e-12 * b.abs().max(1e-300);
    let inner = |t: f64| quadrature::integrate_with_breaks(|s: f64| (-(s - t - lag).abs() / xi).exp(), 0.0, dt, &[t + lag], tol);
    let outer = quadrature::integrate_with_breaks(inner, 0.0, dt, &[dt - lag, -lag], tol * dt.max(1.0));
    Ok(ridge + b / (2.0 * xi) * outer)
}

/// Pearson coefficient from a covariance and two variances.
pub fn pearson(cov: f64, var_i: f64, var_j: f64) -> Result<f64> {
    if !(var_i > 0.0) || !(var_j > 0.0) {
        return Err(Error::DegenerateVariance(format!("variances {var_i}, {var_j}")));
    }
    Ok(cov / (var_i * var_j).sqrt())
}

/// Cross kernel plus the two auto kernels, checked to give `|ρ(Δt)| ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPair {
    pub cross: CorrelationModel,
    pub auto_i: CorrelationModel,
    pub auto_j: CorrelationModel,
}

const VALIDATION_POINTS: usize = 64;

impl ModelPair {
    pub fn new(cross: CorrelationModel, auto_i: CorrelationModel, auto_j: CorrelationModel) -> Result<Self> {
        let pair = ModelPair { cross, auto_i, auto_j };
        pair.validate()?;
        Ok(pair)
    }

    /// Unit Brownian autos with cross kernel `cross`.
    pub fn with_brownian_autos(cross: CorrelationModel) -> Result<Self> {
        Self::new(cross, CorrelationModel::brownian(1.0), CorrelationModel::brownian(1.0))
    }

    /// The Δt grid on which `|ρ| ≤ 1` is checked.
    pub fn validation_grid(&self) -> Vec<f64> {
        let widest = [self.cross.width, self.auto_i.width, self.auto_j.width].into_iter().fold(0.0, f64::max);
        let scale = if widest > 0.0 { widest } else { self.cross.lag.abs().max(1.0) };
        let (lo, hi) = ((1e-3 * scale).ln(), (1e3 * scale).ln());
        (0..VALIDATION_POINTS).map(|k| (lo + (hi - lo) * k as f64 / (VALIDATION_POINTS - 1) as f64).exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.cross.validate()?;
        self.auto_i.validate_auto()?;
        self.auto_j.validate_auto()?;
        for dt in self.validation_grid() {
            let rho = sync_rho(self, dt)?;
            if rho.abs() > 1.0 + 1e-12 {
                return Err(Error::InvalidModel(format!("|rho| = {} > 1 at dt = {dt}", rho.abs())));
            }
        }
        Ok(())
    }

    /// Model for the reversed pair `(j, i)`.
    pub fn swapped(&self) -> ModelPair {
        ModelPair { cross: CorrelationModel { lag: -self.cross.lag, ..self.cross }, auto_i: self.auto_j, auto_j: self.auto_i }
    }
}

/// Synchronous Pearson curve `C¹²/√(C¹¹C²²)` at horizon `dt`.
pub fn sync_rho(pair: &ModelPair, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    pearson(sync_covariance(&pair.cross, dt)?, sync_covariance(&pair.auto_i, dt)?, sync_covariance(&pair.auto_j, dt)?)
}

#[derive(Default)]
struct Slot {
    delta: Option<f64>,
    exp: Option<f64>,
    c: Option<f64>,
    lag: Option<f64>,
    width: Option<f64>,
    seen: bool,
}

impl Slot {
    fn build(self, line: usize) -> Result<CorrelationModel> {
        let width = self.width.unwrap_or(0.0);
        let (mut delta, mut exp) = (self.delta, self.exp);
        if let Some(c) = self.c {
            let target = if width > 0.0 { &mut exp } else { &mut delta };
            if target.is_some() {
                return Err(Error::Parse { line, message: "`c` given together with the weight it sets".into() });
            }
            *target = Some(c);
        }
        Ok(CorrelationModel { delta_weight: delta.unwrap_or(0.0), lag: self.lag.unwrap_or(0.0), width, exp_weight: exp.unwrap_or(0.0) })
    }
}

/// Parses the flat `section.key=value` model format (`#` starts a comment).
///
/// Sections are `cross`, `auto_i`, `auto_j`; keys are `a`/`delta`, `b`/`exp`,
/// `c`, `tau`/`lag` and `xi`/`width`. `c` sets the exponential weight when
/// `xi > 0` and the delta weight otherwise. An absent auto section means a
/// unit Brownian auto-kernel.
pub fn parse_model_file(text: &str) -> Result<ModelPair> {
    let mut slots: [Slot; 3] = Default::default();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{content}`")))?;
        let (section, field) = key.trim().split_once('.').ok_or_else(|| err(format!("expected section.key, got `{}`", key.trim())))?;
        let value: f64 = value.trim().parse().map_err(|_| err(format!("not a number: `{}`", value.trim())))?;
        let slot = match section.trim() {
            "cross" => &mut slots[0],
            "auto_i" => &mut slots[1],
            "auto_j" => &mut slots[2],
            other => return Err(err(format!("unknown section `{other}`"))),
        };
        slot.seen = true;
        let target = match field.trim() {
            "a" | "delta" | "delta_weight" => &mut slot.delta,
            "b" | "exp" | "exp_weight" => &mut slot.exp,
            "c" => &mut slot.c,
            "tau" | "lag" => &mut slot.lag,
            "xi" | "width" => &mut slot.width,
            other => return Err(err(format!("unknown key `{other}`"))),
        };
        if target.replace(value).is_some() {
            return Err(err(format!("duplicate key `{}`", key.trim())));
        }
    }
    let [cross, auto_i, auto_j] = slots;
    let auto = |s: Slot| -> Result<CorrelationModel> {
        if s.seen {
            s.build(last_line)
        } else {
            Ok(CorrelationModel::brownian(1.0))
        }
    };
    ModelPair::new(cross.build(last_line)?, auto(auto_i)?, auto(auto_j)?)
}
