//! Deconvolution of the sampling kernel from measured spectra, and the
//! correlograms and Epps curves rebuilt from corrected spectra.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::async_theory::discrete_kernel;
use crate::error::{Error, Result};
use crate::estimation::{Correlogram, EppsCurve, SpectrumEstimate};
use crate::kernels::pearson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    Inverse,
    Wiener,
}

/// Signal-to-noise ratio used by the Wiener filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Snr {
    /// Estimated from the measured spectrum, see [`default_snr`].
    Auto,
    Scalar(f64),
    /// One value per frequency bin.
    PerFrequency(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub mode: FilterMode,
    pub snr: Snr,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { mode: FilterMode::Wiener, snr: Snr::Auto }
    }
}

impl FilterSpec {
    pub fn inverse() -> Self {
        FilterSpec { mode: FilterMode::Inverse, snr: Snr::Auto }
    }
}

fn kernel_bins(s: &SpectrumEstimate, lambda_i: f64, lambda_j: f64) -> Result<Vec<Complex64>> {
    if !(lambda_i > 0.0) || !(lambda_j > 0.0) {
        return Err(Error::InvalidArgument(format!("rates must be > 0, got {lambda_i}, {lambda_j}")));
    }
    let (li, lj) = (lambda_i * s.grid_dt, lambda_j * s.grid_dt);
    (0..s.t_len).map(|n| discrete_kernel(li, lj, n, s.t_len)).collect()
}

/// Applies `f` to bins `0..=T/2` and fills the rest by conjugate mirroring,
/// so the output is exactly Hermitian whenever the input is.
fn map_bins<F: Fn(usize, Complex64) -> Complex64>(s: &SpectrumEstimate, f: F) -> SpectrumEstimate {
    let t = s.t_len;
    let mut bins = vec![Complex64::new(0.0, 0.0); t];
    for n in 0..=t / 2 {
        let v = f(n, s.s[n]);
        let mirror = (t - n) % t;
        if mirror == n {
            bins[n] = if s.s[n].im == 0.0 { Complex64::new(v.re, 0.0) } else { v };
        } else {
            bins[n] = v;
            bins[mirror] = if s.s[mirror] == s.s[n].conj() { v.conj() } else { f(mirror, s.s[mirror]) };
        }
    }
    SpectrumEstimate::from_bins(bins, s.n_days, s.grid_dt, s.rates)
}

/// Applies the finite-grid sampling factor to a synchronous spectrum.
pub fn forward_kernel(s: &SpectrumEstimate, lambda_i: f64, lambda_j: f64) -> Result<SpectrumEstimate> {
    let k = kernel_bins(s, lambda_i, lambda_j)?;
    Ok(map_bins(s, |n, v| v * k[n]))
}

/// `Ŝ_n = S̃_n / K_n` with the finite-grid sampling factor.
pub fn inverse_filter(s: &SpectrumEstimate, lambda_i: f64, lambda_j: f64) -> Result<SpectrumEstimate> {
    let k = kernel_bins(s, lambda_i, lambda_j)?;
    Ok(map_bins(s, |n, v| v / k[n]))
}

/// Ratio of the mean spectral power `|S̃_n|²` below `min(λ_i, λ_j)` (DC
/// excluded) to the mean power above it.
pub fn default_snr(s: &SpectrumEstimate, lambda_i: f64, lambda_j: f64) -> Result<f64> {
    let cut = lambda_i.min(lambda_j) * s.grid_dt;
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for n in 1..s.t_len {
        let p = s.s[n].norm_sqr();
        if s.omega(n).abs() < cut {
            lo.push(p)
        } else {
            hi.push(p)
        }
    }
    if lo.is_empty() || hi.is_empty() {
        return Err(Error::InsufficientData(format!("cannot split {} bins at rate {cut} per step", s.t_len)));
    }
    let ratio = crate::exec::mean(&lo) / crate::exec::mean(&hi);
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::DegenerateVariance(format!("spectral power ratio {ratio}")));
    }
    Ok(ratio)
}

/// `Ŝ = S̃ K⁻¹ |K|²/(|K|² + 1/SNR)`.
pub fn wiener_filter(s: &SpectrumEstimate, lambda_i: f64, lambda_j: f64, spec: &FilterSpec) -> Result<SpectrumEstimate> {
    let snr: Vec<f64> = match &spec.snr {
        Snr::Auto => vec![default_snr(s, lambda_i, lambda_j)?; s.t_len],
        Snr::Scalar(v) => vec![*v; s.t_len],
        Snr::PerFrequency(v) => {
            if v.len() != s.t_len {
                return Err(Error::LengthMismatch(format!("{} SNR values for {} bins", v.len(), s.t_len)));
            }
            v.clone()
        }
    };
    if let Some(bad) = snr.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidArgument(format!("SNR must be > 0, got {bad}")));
    }
    let k = kernel_bins(s, lambda_i, lambda_j)?;
    Ok(map_bins(s, |n, v| {
        let p = k[n].norm_sqr();
        if snr[n].is_infinite() {
            v / k[n]
        } else {
            v / k[n] * (p / (p + 1.0 / snr[n]))
        }
    }))
}

/// Applies the filter described by `spec`.
pub fn apply_filter(s: &SpectrumEstimate, lambda_i: f64, lambda_j: f64, spec: &FilterSpec) -> Result<SpectrumEstimate> {
    match spec.mode {
        FilterMode::Inverse => inverse_filter(s, lambda_i, lambda_j),
        FilterMode::Wiener => wiener_filter(s, lambda_i, lambda_j, spec),
    }
}

/// Filters an auto-spectrum at rate `lambda` with its delta mass held fixed:
/// the lag-0 value `(1/T) Σ Re Ŝ_n` is removed, the remainder filtered, and
/// lag 0 of the result set back to the mass. A white spectrum passes unchanged.
pub fn filter_auto(s: &SpectrumEstimate, lambda: f64, spec: &FilterSpec) -> Result<SpectrumEstimate> {
    let re: Vec<f64> = s.s.iter().map(|v| v.re).collect();
    let delta = crate::exec::mean(&re);
    let regular = map_bins(s, |_, v| v - delta);
    if regular.s.iter().all(|v| v.norm() <= 1e-14 * delta.abs()) {
        return Ok(s.clone());
    }
    let f = apply_filter(&regular, lambda, lambda, spec)?;
    let re: Vec<f64> = f.s.iter().map(|v| v.re).collect();
    let shift = delta - crate::exec::mean(&re);
    Ok(map_bins(&f, |_, v| v + shift))
}

/// Inverse DFT of a corrected spectrum: `ĉ(k) = (1/T) Σ_n Ŝ_n e^{−iω_n k}`
/// on lags `−max_lag..=max_lag`.
pub fn filtered_correlogram(s: &SpectrumEstimate, max_lag: usize, auto: bool) -> Result<Correlogram> {
    if 2 * max_lag >= s.t_len {
        return Err(Error::InvalidArgument(format!("max_lag {max_lag} too large for {} bins", s.t_len)));
    }
    let mut buf = s.s.clone();
    FftPlanner::new().plan_fft_forward(s.t_len).process(&mut buf);
    let t = s.t_len as f64;
    let norm = (buf.iter().map(|v| v.norm_sqr()).sum::<f64>() / t).sqrt() / t;
    let residue = buf.iter().map(|v| v.im.abs()).fold(0.0, f64::max) / t;
    let limit = 1e-6 * norm.max(f64::MIN_POSITIVE);
    if residue > limit {
        return Err(Error::NotHermitian { residue, limit });
    }
    let at = |k: i64| buf[k.rem_euclid(s.t_len as i64) as usize].re / t;
    let values: Vec<f64> = (-(max_lag as i64)..=max_lag as i64).map(at).collect();
    let lag_grid = (-(max_lag as i64)..=max_lag as i64).map(|k| k as f64 * s.grid_dt).collect();
    let delta = auto.then(|| values[max_lag]);
    Ok(Correlogram { lag_grid, stderr: vec![f64::NAN; values.len()], values, n_days: s.n_days, delta })
}

/// Fejér weight `sin²(hω/2)/sin²(ω/2)`, equal to `h²` at `ω = 0`.
fn fejer(h: usize, w: f64) -> f64 {
    let d = (0.5 * w).sin();
    if d.abs() < 1e-12 {
        return (h * h) as f64;
    }
    ((0.5 * h as f64 * w).sin() / d).powi(2)
}

fn spectral_covariance(s: &SpectrumEstimate, h: usize) -> f64 {
    let terms: Vec<f64> = (0..s.t_len).map(|n| s.s[n].re * fejer(h, s.omega(n))).collect();
    crate::exec::pairwise_sum(&terms) / s.t_len as f64
}

/// Epps curve from spectra: covariance over `h` grid steps is
/// `(1/T) Σ_n Re(Ŝ_n) F_h(ω_n)`, normalised by the same expression for the
/// two auto-spectra.
pub fn filtered_epps_curve(
    cross: &SpectrumEstimate,
    auto_i: &SpectrumEstimate,
    auto_j: &SpectrumEstimate,
    dt_grid: &[f64],
) -> Result<EppsCurve> {
    if auto_i.t_len != cross.t_len || auto_j.t_len != cross.t_len {
        return Err(Error::LengthMismatch("cross and auto spectra differ in length".into()));
    }
    let mut rho = Vec::with_capacity(dt_grid.len());
    for &dt in dt_grid {
        let h = (dt / cross.grid_dt).round();
        if h < 1.0 || (dt / cross.grid_dt - h).abs() > 1e-9 * h {
            return Err(Error::InvalidArgument(format!("dt {dt} is not a multiple of grid_dt {}", cross.grid_dt)));
        }
        let h = h as usize;
        rho.push(Some(pearson(spectral_covariance(cross, h), spectral_covariance(auto_i, h), spectral_covariance(auto_j, h))?));
    }
    Ok(EppsCurve { dt_grid: dt_grid.to_vec(), stderr: vec![None; rho.len()], rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{circular_epps_curve, estimate_spectrum};
    use crate::exec::Exec;
    use crate::sampling::{rng_for, Stream};
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, day: u64, n: usize) -> Vec<f64> {
        let mut rng = rng_for(seed, day, Stream::Path);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn toy_spectrum(t: usize) -> SpectrumEstimate {
        let bins = (0..t)
            .map(|n| {
                let k = if 2 * n <= t { n as f64 } else { n as f64 - t as f64 };
                let w = 2.0 * std::f64::consts::PI * k / t as f64;
                Complex64::from_polar(0.5 / (1.0 + w * w * 4.0), 2.0 * w)
            })
            .collect();
        SpectrumEstimate::from_bins(bins, 1, 1.0, None)
    }

    #[test]
    fn auto_filter_keeps_white_spectra_and_delta_mass() {
        let white = SpectrumEstimate::from_bins(vec![Complex64::new(0.7, 0.0); 64], 1, 1.0, None);
        assert_eq!(filter_auto(&white, 0.1, &FilterSpec::inverse()).unwrap().s, white.s);
        let s = toy_spectrum(64);
        let f = filter_auto(&s, 0.3, &FilterSpec::inverse()).unwrap();
        let lag0 = |x: &SpectrumEstimate| x.s.iter().map(|v| v.re).sum::<f64>() / 64.0;
        assert!((lag0(&f) - lag0(&s)).abs() < 1e-12);
    }

    #[test]
    fn inverse_undoes_forward() {
        let s = toy_spectrum(256);
        let round = inverse_filter(&forward_kernel(&s, 0.3, 0.05).unwrap(), 0.3, 0.05).unwrap();
        for (a, b) in round.s.iter().zip(&s.s) {
            assert!((a - b).norm() < 1e-12 * b.norm().max(1e-3));
        }
        let fast = inverse_filter(&s, 1e3, 1e3).unwrap();
        assert!(fast.s.iter().zip(&s.s).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn wiener_limits_and_monotonicity() {
        let s = toy_spectrum(128);
        let inv = inverse_filter(&s, 0.2, 0.1).unwrap();
        let big = wiener_filter(&s, 0.2, 0.1, &FilterSpec { mode: FilterMode::Wiener, snr: Snr::Scalar(1e14) }).unwrap();
        assert!(big.s.iter().zip(&inv.s).all(|(a, b)| (a - b).norm() < 1e-9 * b.norm()));
        let small = wiener_filter(&s, 0.2, 0.1, &FilterSpec { mode: FilterMode::Wiener, snr: Snr::Scalar(1e-14) }).unwrap();
        assert!(small.s.iter().all(|v| v.norm() < 1e-12));
        let mut prev = vec![0.0; 128];
        for snr in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let w = wiener_filter(&s, 0.2, 0.1, &FilterSpec { mode: FilterMode::Wiener, snr: Snr::Scalar(snr) }).unwrap();
            for (n, p) in prev.iter_mut().enumerate() {
                let m = w.s[n].norm();
                assert!(m >= *p && m <= inv.s[n].norm() * (1.0 + 1e-12));
                *p = m;
            }
        }
        assert!(wiener_filter(&s, 0.2, 0.1, &FilterSpec { mode: FilterMode::Wiener, snr: Snr::Scalar(0.0) }).is_err());
    }

    #[test]
    fn filters_preserve_hermitian_symmetry() {
        let days: Vec<_> = (0..4).map(|d| (noise(1, d, 300), noise(2, d, 300))).collect();
        let s = estimate_spectrum(&days, 300, 1.0, Exec::Sequential).unwrap();
        for f in [inverse_filter(&s, 0.4, 0.1).unwrap(), wiener_filter(&s, 0.4, 0.1, &FilterSpec::default()).unwrap()] {
            assert_eq!(f.hermitian_residue(), 0.0);
            filtered_correlogram(&f, 20, false).unwrap();
        }
    }

    #[test]
    fn flat_spectrum_gives_delta_correlogram() {
        let s = SpectrumEstimate::from_bins(vec![Complex64::new(0.7, 0.0); 64], 1, 1.0, None);
        let c = filtered_correlogram(&s, 10, true).unwrap();
        assert!((c.delta.unwrap() - 0.7).abs() < 1e-14);
        assert!(c.values.iter().enumerate().all(|(k, v)| k == 10 || v.abs() < 1e-14));
        let mut bad = s.clone();
        bad.s[3] = Complex64::new(0.7, 0.5);
        assert!(matches!(filtered_correlogram(&bad, 10, false), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn pass_through_matches_time_domain_curve() {
        let days: Vec<_> = (0..3)
            .map(|d| {
                let a = noise(3, d, 500);
                let b: Vec<f64> = a.iter().zip(noise(4, d, 500)).map(|(x, y)| 0.6 * x + 0.8 * y).collect();
                (a, b)
            })
            .collect();
        let grid = [1.0, 2.0, 5.0, 20.0, 137.0];
        let auto = |k: usize| {
            let d: Vec<_> = days.iter().map(|p| if k == 0 { (p.0.clone(), p.0.clone()) } else { (p.1.clone(), p.1.clone()) }).collect();
            estimate_spectrum(&d, 500, 1.0, Exec::Sequential).unwrap()
        };
        let cross = estimate_spectrum(&days, 500, 1.0, Exec::Sequential).unwrap();
        let spectral = filtered_epps_curve(&cross, &auto(0), &auto(1), &grid).unwrap();
        let direct = circular_epps_curve(&days, 1.0, &grid, Exec::Sequential).unwrap();
        for (a, b) in spectral.rho.iter().zip(&direct.rho) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-10);
        }
    }
}
