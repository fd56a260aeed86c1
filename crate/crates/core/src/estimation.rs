//! Empirical estimators on gridded return series: sampling rates, Epps curves,
//! lagged correlograms and day-averaged cross-spectra.

use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::sampling::SteppedSeries;

/// Tick rate with its Poisson standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub lambda: f64,
    pub stderr: f64,
}

/// `count / session_length` with uncertainty `√count / session_length`.
pub fn estimate_rate(tick_count: usize, session_length: f64) -> Result<RateEstimate> {
    if !(session_length > 0.0) {
        return Err(Error::InvalidArgument(format!("session length must be > 0, got {session_length}")));
    }
    if tick_count == 0 {
        return Err(Error::InsufficientData("no ticks to estimate a rate from".into()));
    }
    let n = tick_count as f64;
    Ok(RateEstimate { lambda: n / session_length, stderr: n.sqrt() / session_length })
}

/// Pooled rate over several sessions.
pub fn estimate_rate_pooled(tick_counts: &[usize], session_length: f64) -> Result<RateEstimate> {
    estimate_rate(tick_counts.iter().sum(), session_length * tick_counts.len() as f64)
}

/// Pearson coefficient per horizon; `None` marks horizons without data.
#[derive(Debug, Clone, PartialEq)]
pub struct EppsCurve {
    pub dt_grid: Vec<f64>,
    pub rho: Vec<Option<f64>>,
    pub stderr: Vec<Option<f64>>,
}

fn horizon_steps(dt: f64, grid_dt: f64) -> Result<usize> {
    let h = dt / grid_dt;
    let r = h.round();
    if r < 1.0 || (h - r).abs() > 1e-9 * h.max(1.0) {
        return Err(Error::InvalidArgument(format!("dt {dt} is not a positive multiple of grid_dt {grid_dt}")));
    }
    Ok(r as usize)
}

fn check_grid(dt_grid: &[f64]) -> Result<()> {
    if dt_grid.is_empty() || dt_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("dt grid must be nonempty and strictly increasing".into()));
    }
    Ok(())
}

fn common_grid_dt(days: &[(SteppedSeries, SteppedSeries)]) -> Result<f64> {
    let first = days.first().ok_or_else(|| Error::InsufficientData("no days".into()))?;
    let g = first.0.grid_dt;
    for (a, b) in days {
        if a.grid_dt != g || b.grid_dt != g {
            return Err(Error::InvalidArgument("series on different grids".into()));
        }
        if a.len() != b.len() || a.start != b.start {
            return Err(Error::LengthMismatch(format!("day series cover different windows ({} vs {} points)", a.len(), b.len())));
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    xy: f64,
    xx: f64,
    yy: f64,
    n: usize,
}

impl Moments {
    fn add(self, o: Moments) -> Moments {
        Moments { xy: self.xy + o.xy, xx: self.xx + o.xx, yy: self.yy + o.yy, n: self.n + o.n }
    }

    fn rho(&self) -> Option<f64> {
        if self.n < 2 || !(self.xx > 0.0) || !(self.yy > 0.0) {
            return None;
        }
        Some(self.xy / (self.xx * self.yy).sqrt())
    }
}

fn non_overlapping(x: &[f64], y: &[f64], h: usize) -> Moments {
    let mut m = Moments::default();
    let mut k = 0;
    while k + h < x.len() {
        let (a, b) = (x[k + h] - x[k], y[k + h] - y[k]);
        m.xy += a * b;
        m.xx += a * a;
        m.yy += b * b;
        m.n += 1;
        k += h;
    }
    m
}

fn circular_moments(zx: &[f64], zy: &[f64], h: usize) -> Moments {
    let t = zx.len();
    let window = |z: &[f64]| -> Vec<f64> {
        let mut acc: f64 = (0..h).map(|s| z[s % t]).sum();
        let mut out = Vec::with_capacity(t);
        for s in 0..t {
            out.push(acc);
            acc += z[(s + h) % t] - z[s];
        }
        out
    };
    let (a, b) = (window(zx), window(zy));
    let mut m = Moments { n: t, ..Default::default() };
    for (u, v) in a.iter().zip(&b) {
        m.xy += u * v;
        m.xx += u * u;
        m.yy += v * v;
    }
    m.xy /= t as f64;
    m.xx /= t as f64;
    m.yy /= t as f64;
    m
}

fn curve_from_moments(dt_grid: &[f64], per_day: Vec<Vec<Moments>>) -> EppsCurve {
    let n_days = per_day.len();
    let mut rho = Vec::with_capacity(dt_grid.len());
    let mut stderr = Vec::with_capacity(dt_grid.len());
    for g in 0..dt_grid.len() {
        let pooled = per_day.iter().fold(Moments::default(), |acc, d| acc.add(d[g]));
        let r = pooled.rho();
        rho.push(r);
        let day_rhos: Vec<f64> = per_day.iter().filter_map(|d| d[g].rho()).collect();
        let se = if day_rhos.len() >= 2 && r.is_some() {
            Some(exec::sample_std(&day_rhos) / (day_rhos.len() as f64).sqrt())
        } else if let (Some(r), true) = (r, n_days == 1 && pooled.n > 2) {
            Some((1.0 - r * r) / ((pooled.n - 2) as f64).sqrt())
        } else {
            None
        };
        stderr.push(se);
    }
    EppsCurve { dt_grid: dt_grid.to_vec(), rho, stderr }
}

/// Pooled Pearson coefficient of non-overlapping `Δt`-returns across days.
/// The standard error is the across-day dispersion of per-day coefficients.
pub fn epps_curve(days: &[(SteppedSeries, SteppedSeries)], dt_grid: &[f64], exec: Exec) -> Result<EppsCurve> {
    check_grid(dt_grid)?;
    let g = common_grid_dt(days)?;
    let steps = dt_grid.iter().map(|&dt| horizon_steps(dt, g)).collect::<Result<Vec<_>>>()?;
    let per_day = exec.map(days.len(), |d| {
        let (a, b) = &days[d];
        steps.iter().map(|&h| non_overlapping(&a.levels, &b.levels, h)).collect::<Vec<_>>()
    });
    Ok(curve_from_moments(dt_grid, per_day))
}

/// Epps curve from overlapping `Δt`-returns on each day taken as a circle;
/// the time-domain counterpart of a spectral reconstruction.
pub fn circular_epps_curve(days: &[(Vec<f64>, Vec<f64>)], grid_dt: f64, dt_grid: &[f64], exec: Exec) -> Result<EppsCurve> {
    check_grid(dt_grid)?;
    let t = check_day_lengths(days)?;
    let steps = dt_grid.iter().map(|&dt| horizon_steps(dt, grid_dt)).collect::<Result<Vec<_>>>()?;
    let per_day = exec.map(days.len(), |d| steps.iter().map(|&h| circular_moments(&days[d].0, &days[d].1, h)).collect::<Vec<_>>());
    let mut curve = curve_from_moments(dt_grid, per_day);
    if t < 2 {
        curve.rho.iter_mut().for_each(|r| *r = None);
    }
    Ok(curve)
}

fn check_day_lengths(days: &[(Vec<f64>, Vec<f64>)]) -> Result<usize> {
    let t = days.first().map(|d| d.0.len()).ok_or_else(|| Error::InsufficientData("no days".into()))?;
    for (k, (a, b)) in days.iter().enumerate() {
        if a.len() != t || b.len() != t {
            return Err(Error::LengthMismatch(format!("day {k} has lengths {}/{}, expected {t}", a.len(), b.len())));
        }
    }
    Ok(t)
}

/// Zero-mean, unit-variance copy of `z`; `None` for a constant series.
pub fn normalize(z: &[f64]) -> Option<Vec<f64>> {
    if z.len() < 2 {
        return None;
    }
    let m = exec::mean(z);
    let dev: Vec<f64> = z.iter().map(|v| (v - m) * (v - m)).collect();
    let var = exec::pairwise_sum(&dev) / z.len() as f64;
    if !(var > 0.0) {
        return None;
    }
    let s = var.sqrt();
    Some(z.iter().map(|v| (v - m) / s).collect())
}

/// Lagged correlation `ĉ(τ)` on a symmetric lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlogram {
    pub lag_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Across-day standard error per lag (NaN with fewer than 2 days).
    pub stderr: Vec<f64>,
    pub n_days: usize,
    /// Set for auto-correlograms: the `τ = 0` bin, i.e. the delta mass.
    pub delta: Option<f64>,
}

impl Correlogram {
    pub fn max_lag(&self) -> usize {
        self.values.len() / 2
    }

    pub fn at_lag(&self, k: i64) -> f64 {
        self.values[(k + self.max_lag() as i64) as usize]
    }

    pub fn grid_dt(&self) -> f64 {
        if self.lag_grid.len() > 1 {
            self.lag_grid[1] - self.lag_grid[0]
        } else {
            1.0
        }
    }

    /// `ĉ(τ) − ĉ(−τ)` for `τ = 1..=max_lag` steps.
    pub fn asymmetry(&self) -> Vec<f64> {
        (1..=self.max_lag() as i64).map(|k| self.at_lag(k) - self.at_lag(-k)).collect()
    }
}

fn lagged_products(x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    (-(max_lag as i64)..=max_lag as i64)
        .map(|k| {
            let (xs, ys) = if k >= 0 { (&x[..n - k as usize], &y[k as usize..]) } else { (&x[(-k) as usize..], &y[..n - (-k) as usize]) };
            let prods: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();
            exec::pairwise_sum(&prods) / prods.len() as f64
        })
        .collect()
}

/// `ĉ(τ) = ⟨z^i_t z^j_{t+τ}⟩` from one-step increments, averaged over days.
/// With `normalize` each day's increments are standardised first; days whose
/// increments are constant are skipped. `auto` marks an auto-correlogram.
pub fn correlogram(
    days: &[(Vec<f64>, Vec<f64>)],
    grid_dt: f64,
    max_lag: usize,
    normalize_days: bool,
    auto: bool,
    exec: Exec,
) -> Result<Correlogram> {
    let per_day: Vec<Option<Vec<f64>>> = exec.map(days.len(), |d| {
        let (a, b) = &days[d];
        if a.len() != b.len() || a.len() <= max_lag {
            return None;
        }
        let (za, zb) = if normalize_days { (normalize(a)?, normalize(b)?) } else { (a.clone(), b.clone()) };
        Some(lagged_products(&za, &zb, max_lag))
    });
    if let Some((k, (a, b))) = days.iter().enumerate().find(|(_, (a, b))| a.len() != b.len() || a.len() <= max_lag) {
        return Err(Error::LengthMismatch(format!("day {k}: lengths {}/{} with max_lag {max_lag}", a.len(), b.len())));
    }
    let used: Vec<Vec<f64>> = per_day.into_iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::InsufficientData("no usable days for the correlogram".into()));
    }
    let width = 2 * max_lag + 1;
    let mut values = Vec::with_capacity(width);
    let mut stderr = Vec::with_capacity(width);
    for k in 0..width {
        let col: Vec<f64> = used.iter().map(|d| d[k]).collect();
        values.push(exec::mean(&col));
        stderr.push(if col.len() >= 2 { exec::sample_std(&col) / (col.len() as f64).sqrt() } else { f64::NAN });
    }
    let lag_grid = (-(max_lag as i64)..=max_lag as i64).map(|k| k as f64 * grid_dt).collect();
    let delta = auto.then(|| values[max_lag]);
    Ok(Correlogram { lag_grid, values, stderr, n_days: used.len(), delta })
}

/// Day-averaged cross-periodogram `Ŝ_n = ⟨F^i_n conj(F^j_n)⟩ / T` with
/// `F_n = Σ_t z_t e^{−2πint/T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub t_len: usize,
    pub n_days: usize,
    pub grid_dt: f64,
    pub s: Vec<Complex64>,
    /// Per-asset rate estimates, when known.
    pub rates: Option<[f64; 2]>,
    /// Mean `|Ŝ_n|` over the upper half band `T/4 ≤ n ≤ 3T/4`.
    pub noise_floor: f64,
}

impl SpectrumEstimate {
    pub fn from_bins(s: Vec<Complex64>, n_days: usize, grid_dt: f64, rates: Option<[f64; 2]>) -> Self {
        let t_len = s.len();
        let band = &s[t_len / 4..=(3 * t_len / 4).min(t_len.saturating_sub(1))];
        let mags: Vec<f64> = band.iter().map(|v| v.norm()).collect();
        SpectrumEstimate { t_len, n_days, grid_dt, noise_floor: exec::mean(&mags), s, rates }
    }

    /// Angular frequency of bin `n` in rad per grid step (`2πn/T`, folded to `(−π, π]`).
    pub fn omega(&self, n: usize) -> f64 {
        let t = self.t_len as f64;
        let k = if 2 * n <= self.t_len { n as f64 } else { n as f64 - t };
        2.0 * std::f64::consts::PI * k / t
    }

    /// Largest deviation from `S_n = conj(S_{T−n})`.
    pub fn hermitian_residue(&self) -> f64 {
        (0..self.t_len).map(|n| (self.s[n] - self.s[(self.t_len - n) % self.t_len].conj()).norm()).fold(0.0, f64::max)
    }
}

fn periodogram(a: &[f64], b: &[f64], planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let t = a.len();
    let fft = planner.plan_fft_forward(t);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut fa);
    fft.process(&mut fb);
    fa.iter().zip(&fb).map(|(x, y)| x * y.conj() / t as f64).collect()
}

fn pairwise_vec_sum(parts: &[Vec<Complex64>]) -> Vec<Complex64> {
    match parts.len() {
        0 => Vec::new(),
        1 => parts[0].clone(),
        n => {
            let (l, r) = parts.split_at(n / 2);
            let (l, r) = (pairwise_vec_sum(l), pairwise_vec_sum(r));
            l.iter().zip(&r).map(|(a, b)| a + b).collect()
        }
    }
}

/// Cross-periodogram of increments averaged over days; every day must have
/// exactly `t_len` increments. The result is symmetrised so that
/// `Ŝ_n = conj(Ŝ_{T−n})` holds exactly.
pub fn estimate_spectrum(days: &[(Vec<f64>, Vec<f64>)], t_len: usize, grid_dt: f64, exec: Exec) -> Result<SpectrumEstimate> {
    if t_len < 2 {
        return Err(Error::InvalidArgument(format!("spectrum length must be >= 2, got {t_len}")));
    }
    let t = check_day_lengths(days)?;
    if t != t_len {
        return Err(Error::LengthMismatch(format!("days have {t} increments, expected {t_len}")));
    }
    let per_day = exec.map(days.len(), |d| {
        let mut planner = FftPlanner::new();
        periodogram(&days[d].0, &days[d].1, &mut planner)
    });
    let total = pairwise_vec_sum(&per_day);
    let m = days.len() as f64;
    let s: Vec<Complex64> = (0..t_len)
        .map(|n| {
            let mirror = total[(t_len - n) % t_len].conj();
            (total[n] + mirror) / (2.0 * m)
        })
        .collect();
    Ok(SpectrumEstimate::from_bins(s, days.len(), grid_dt, None))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_epps_csv<W: Write>(w: W, c: &EppsCurve) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["dt", "rho", "stderr"])?;
    for k in 0..c.dt_grid.len() {
        out.write_record([format!("{}", c.dt_grid[k]), fmt_opt(c.rho[k]), fmt_opt(c.stderr[k])])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_epps_csv<R: Read>(r: R) -> Result<EppsCurve> {
    let mut c = EppsCurve { dt_grid: vec![], rho: vec![], stderr: vec![] };
    for (i, rec) in csv::Reader::from_reader(r).records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let opt = |k: usize| -> Result<Option<f64>> {
            match rec.get(k).map(str::trim) {
                None | Some("") => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| Error::Parse { line, message: format!("bad number `{s}`") }),
            }
        };
        c.dt_grid.push(opt(0)?.ok_or_else(|| Error::Parse { line, message: "missing dt".into() })?);
        c.rho.push(opt(1)?);
        c.stderr.push(opt(2)?);
    }
    Ok(c)
}

/// Writes `tau,value,stderr`.
pub fn write_correlogram_csv<W: Write>(w: W, c: &Correlogram) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tau", "value", "stderr"])?;
    for k in 0..c.values.len() {
        let se = if c.stderr[k].is_finite() { format!("{}", c.stderr[k]) } else { String::new() };
        out.write_record([format!("{}", c.lag_grid[k]), format!("{}", c.values[k]), se])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `tau,value[,stderr]`; the lag grid must be symmetric and uniform.
pub fn read_correlogram_csv<R: Read>(r: R, n_days: usize, auto: bool) -> Result<Correlogram> {
    let (mut lag_grid, mut values, mut stderr) = (vec![], vec![], vec![]);
    for (i, rec) in csv::Reader::from_reader(r).records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize| -> Result<Option<f64>> {
            match rec.get(k).map(str::trim) {
                None | Some("") => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| Error::Parse { line, message: format!("bad number `{s}`") }),
            }
        };
        let missing = || Error::Parse { line, message: "expected tau,value".into() };
        lag_grid.push(num(0)?.ok_or_else(missing)?);
        values.push(num(1)?.ok_or_else(missing)?);
        stderr.push(num(2)?.unwrap_or(f64::NAN));
    }
    let n = lag_grid.len();
    if n % 2 == 0 || n < 3 {
        return Err(Error::InvalidArgument("correlogram needs an odd number (>= 3) of lags".into()));
    }
    let step = lag_grid[1] - lag_grid[0];
    for (k, &tau) in lag_grid.iter().enumerate() {
        let want = (k as f64 - (n / 2) as f64) * step;
        if (tau - want).abs() > 1e-9 * step.abs().max(1.0) {
            return Err(Error::InvalidArgument("lag grid must be uniform and symmetric about 0".into()));
        }
    }
    let delta = auto.then(|| values[n / 2]);
    Ok(Correlogram { lag_grid, values, stderr, n_days, delta })
}

/// Writes `n,re,im`.
pub fn write_spectrum_csv<W: Write>(w: W, s: &SpectrumEstimate) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "re", "im"])?;
    for (n, v) in s.s.iter().enumerate() {
        out.write_record([n.to_string(), format!("{}", v.re), format!("{}", v.im)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_spectrum_csv<R: Read>(r: R, n_days: usize, grid_dt: f64) -> Result<SpectrumEstimate> {
    let mut s = Vec::new();
    for (i, rec) in csv::Reader::from_reader(r).records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |k: usize| -> Result<f64> {
            rec.get(k).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Parse { line, message: "expected n,re,im".into() })
        };
        if get(0)? as usize != s.len() {
            return Err(Error::Parse { line, message: "frequency indices must run 0..T".into() });
        }
        s.push(Complex64::new(get(1)?, get(2)?));
    }
    if s.len() < 2 {
        return Err(Error::InsufficientData("spectrum needs at least 2 bins".into()));
    }
    Ok(SpectrumEstimate::from_bins(s, n_days, grid_dt, None))
}
