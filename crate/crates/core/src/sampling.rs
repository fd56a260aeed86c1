//! Synchronous path simulation, Poisson tick times and previous-tick series.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::FftPlanner;

use crate::async_theory::increment_covariance;
use crate::error::{Error, Result};
use crate::kernels::{CorrelationModel, ModelPair};

/// Distinct RNG stream labels within one (seed, day).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Path,
    Ticks(usize),
}

/// Deterministic generator for `(seed, day, stream)`.
pub fn rng_for(seed: u64, day: u64, stream: Stream) -> ChaCha8Rng {
    let purpose = match stream {
        Stream::Path => 0,
        Stream::Ticks(asset) => 1 + asset as u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day * 16 + purpose);
    rng
}

/// Log-price levels of two assets on a uniform grid; `levels[a][k]` is the
/// level at `start + k·grid_dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub grid_dt: f64,
    pub start: f64,
    pub levels: [Vec<f64>; 2],
    pub seed: u64,
}

impl SimulatedPath {
    pub fn n_steps(&self) -> usize {
        self.levels[0].len() - 1
    }

    pub fn increments(&self, asset: usize) -> Vec<f64> {
        diff(&self.levels[asset])
    }
}

fn diff(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Smallest `n ≥ min` of the form 2^a 3^b 5^c.
fn smooth_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Hermitian square root of the PSD matrix `[[p, q], [q̄, r]]`, or `None` if
/// the matrix is indefinite beyond rounding.
fn sqrt_psd(p: f64, q: Complex64, r: f64) -> Option<[[Complex64; 2]; 2]> {
    let tr = p + r;
    let det = p * r - q.norm_sqr();
    let scale = tr.abs().max(q.norm()).max(f64::MIN_POSITIVE);
    if det < -1e-9 * scale * scale || p < -1e-12 * scale || r < -1e-12 * scale {
        return None;
    }
    let s = det.max(0.0).sqrt();
    let t = (tr + 2.0 * s).max(0.0).sqrt();
    if t == 0.0 {
        return Some([[Complex64::new(0.0, 0.0); 2]; 2]);
    }
    let re = |v: f64| Complex64::new(v / t, 0.0);
    Some([[re(p.max(0.0) + s), q / t], [q.conj() / t, re(r.max(0.0) + s)]])
}

/// Number of lags beyond which the model's increment covariances vanish.
fn kernel_range(pair: &ModelPair, grid_dt: f64) -> usize {
    let widest = [pair.cross.width, pair.auto_i.width, pair.auto_j.width].into_iter().fold(0.0, f64::max);
    ((pair.cross.lag.abs() + 40.0 * widest) / grid_dt).ceil() as usize + 2
}

/// Simulates both assets on `[−warmup, horizon]` (rounded outward to the
/// grid) with increment covariances given by the pair's kernels, using
/// circulant embedding of the 2×2 spectral matrix.
pub fn simulate_paths(pair: &ModelPair, grid_dt: f64, horizon: f64, warmup: f64, seed: u64, day: u64) -> Result<SimulatedPath> {
    if !(grid_dt > 0.0) || !(horizon > 0.0) || !(warmup >= 0.0) {
        return Err(Error::InvalidArgument(format!("need grid_dt > 0, horizon > 0, warmup >= 0 (got {grid_dt}, {horizon}, {warmup})")));
    }
    pair.validate()?;
    let lead = (warmup / grid_dt).ceil() as usize;
    let n = lead + (horizon / grid_dt).ceil() as usize;
    let m = smooth_size(n + kernel_range(pair, grid_dt));

    let mut planner = FftPlanner::<f64>::new();
    let inverse = planner.plan_fft_inverse(m);
    let spectrum = |model: &CorrelationModel| {
        let mut buf: Vec<Complex64> = (0..m)
            .map(|idx| {
                let lag = if idx <= m / 2 { idx as i64 } else { idx as i64 - m as i64 };
                Complex64::new(increment_covariance(model, grid_dt, lag), 0.0)
            })
            .collect();
        inverse.process(&mut buf);
        buf
    };
    let (s_ii, s_jj, s_ij) = (spectrum(&pair.auto_i), spectrum(&pair.auto_j), spectrum(&pair.cross));

    let mut rng = rng_for(seed, day, Stream::Path);
    let mut z = [vec![Complex64::new(0.0, 0.0); m], vec![Complex64::new(0.0, 0.0); m]];
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..=m / 2 {
        let h = sqrt_psd(s_ii[k].re, s_ij[k], s_jj[k].re)
            .ok_or_else(|| Error::InvalidModel(format!("cross-spectral matrix not positive semidefinite at frequency index {k}")))?;
        let real_bin = k == 0 || 2 * k == m;
        let mut w = [Complex64::new(0.0, 0.0); 2];
        for wb in &mut w {
            let g1: f64 = StandardNormal.sample(&mut rng);
            *wb = if real_bin {
                Complex64::new(g1, 0.0)
            } else {
                let g2: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(g1 * half, g2 * half)
            };
        }
        for a in 0..2 {
            let v = h[a][0] * w[0] + h[a][1] * w[1];
            z[a][k] = if real_bin { Complex64::new(v.re, 0.0) } else { v };
            if !real_bin {
                z[a][m - k] = v.conj();
            }
        }
    }
    let norm = 1.0 / (m as f64).sqrt();
    let levels = z.map(|mut buf| {
        inverse.process(&mut buf);
        let mut out = Vec::with_capacity(n + 1);
        let mut x = 0.0;
        out.push(x);
        for v in &buf[..n] {
            x += v.re * norm;
            out.push(x);
        }
        out
    });
    Ok(SimulatedPath { grid_dt, start: -(lead as f64) * grid_dt, levels, seed })
}

/// Poisson arrival times on `[−warmup, horizon]` with rate `lambda`.
pub fn draw_poisson_times<R: Rng>(lambda: f64, horizon: f64, warmup: f64, rng: &mut R) -> Result<Vec<f64>> {
    let exp = Exp::new(lambda).map_err(|_| Error::InvalidArgument(format!("rate must be > 0, got {lambda}")))?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("rate must be finite and > 0, got {lambda}")));
    }
    let mut t = -warmup;
    let mut out = Vec::with_capacity(((horizon + warmup) * lambda * 1.1) as usize + 16);
    loop {
        t += exp.sample(rng);
        if t > horizon {
            return Ok(out);
        }
        out.push(t);
    }
}

/// Where tick times come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPlan {
    /// Independent Poisson clocks; `f64::INFINITY` observes every grid point.
    Poisson([f64; 2]),
    /// Replayed tick times, relative to the session start.
    Replay([Vec<f64>; 2]),
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        match self {
            SamplingPlan::Poisson(rates) => {
                if rates.iter().any(|&l| !(l > 0.0)) {
                    return Err(Error::InvalidArgument(format!("rates must be > 0, got {rates:?}")));
                }
            }
            SamplingPlan::Replay(times) => {
                for ts in times {
                    if ts.windows(2).any(|w| !(w[1] > w[0])) {
                        return Err(Error::InvalidArgument("replayed tick times must be strictly increasing".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Previous-tick series on the grid `start + k·grid_dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteppedSeries {
    pub grid_dt: f64,
    pub start: f64,
    pub levels: Vec<f64>,
    pub tick_times: Vec<f64>,
}

impl SteppedSeries {
    pub fn increments(&self) -> Vec<f64> {
        diff(&self.levels)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.start + (self.levels.len().saturating_sub(1)) as f64 * self.grid_dt
    }

    /// Sub-series on grid points `from..=to` (indices into `levels`).
    pub fn slice(&self, from: usize, to: usize) -> SteppedSeries {
        let t0 = self.start + from as f64 * self.grid_dt;
        let t1 = self.start + to as f64 * self.grid_dt;
        SteppedSeries {
            grid_dt: self.grid_dt,
            start: t0,
            levels: self.levels[from..=to].to_vec(),
            tick_times: self.tick_times.iter().copied().filter(|&t| t > t0 && t <= t1).collect(),
        }
    }
}

/// Grid index of time `t`, rounding up; times within 1e-9 cells of a grid
/// point count as on it.
fn ceil_index(t: f64, start: f64, grid_dt: f64) -> i64 {
    let x = (t - start) / grid_dt;
    let r = x.round();
    if (x - r).abs() <= 1e-9 {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// Previous-tick series of observations `(times, values)` on `n` grid points
/// starting at `start`: each level is the value of the latest tick at or
/// before the grid time.
pub fn previous_tick_ticks(times: &[f64], values: &[f64], grid_dt: f64, start: f64, n: usize) -> Result<SteppedSeries> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch(format!("{} times vs {} values", times.len(), values.len())));
    }
    if !(grid_dt > 0.0) {
        return Err(Error::InvalidArgument(format!("grid_dt must be > 0, got {grid_dt}")));
    }
    let idx: Vec<i64> = times.iter().map(|&t| ceil_index(t, start, grid_dt)).collect();
    if idx.first().is_none_or(|&k| k > 0) {
        return Err(Error::NoPriorTick { start });
    }
    let mut levels = Vec::with_capacity(n);
    let mut cursor = 0;
    for g in 0..n as i64 {
        while cursor + 1 < idx.len() && idx[cursor + 1] <= g {
            cursor += 1;
        }
        levels.push(values[cursor]);
    }
    let end = start + n.saturating_sub(1) as f64 * grid_dt;
    Ok(SteppedSeries { grid_dt, start, levels, tick_times: times.iter().copied().filter(|&t| t > start && t <= end).collect() })
}

/// Samples asset `asset` of `path` at `ticks` and builds the previous-tick
/// series on `n` grid points from `start` (a grid time of the path).
///
/// A tick in the cell `((k−1)·dt, k·dt]` observes the path level at `k·dt`.
pub fn previous_tick(path: &SimulatedPath, asset: usize, ticks: &[f64], start: f64, n: usize) -> Result<SteppedSeries> {
    let levels = &path.levels[asset];
    let values = ticks
        .iter()
        .map(|&t| {
            let k = ceil_index(t, path.start, path.grid_dt);
            usize::try_from(k)
                .ok()
                .and_then(|k| levels.get(k).copied())
                .ok_or_else(|| Error::InvalidArgument(format!("tick at {t} outside the simulated path")))
        })
        .collect::<Result<Vec<f64>>>()?;
    previous_tick_ticks(ticks, &values, path.grid_dt, start, n)
}

/// Grid times of `path` as a tick list (every grid point observed).
pub fn grid_times(path: &SimulatedPath) -> Vec<f64> {
    (0..path.levels[0].len()).map(|k| path.start + k as f64 * path.grid_dt).collect()
}

/// One simulated session: both previous-tick series on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct SampledDay {
    pub series: [SteppedSeries; 2],
}

/// Simulates one day of the pair and samples it according to `plan`.
///
/// Poisson ticks start `10/λ` before the session (or earlier if the kernel
/// needs it); replayed sessions start at the later of the two first ticks,
/// rounded up to the grid.
pub fn sample_day(pair: &ModelPair, plan: &SamplingPlan, grid_dt: f64, horizon: f64, seed: u64, day: u64) -> Result<SampledDay> {
    plan.validate()?;
    let n_out = (horizon / grid_dt).round() as usize + 1;
    match plan {
        SamplingPlan::Poisson(rates) => {
            let warm = rates.iter().filter(|l| l.is_finite()).map(|l| 10.0 / l).fold(grid_dt, f64::max);
            let path = simulate_paths(pair, grid_dt, horizon, warm, seed, day)?;
            let series = [0, 1].map(|a| -> Result<SteppedSeries> {
                let ticks = if rates[a].is_finite() {
                    let mut rng = rng_for(seed, day, Stream::Ticks(a));
                    draw_poisson_times(rates[a], horizon, warm, &mut rng)?
                } else {
                    grid_times(&path)
                };
                previous_tick(&path, a, &ticks, 0.0, n_out)
            });
            let [a, b] = series;
            Ok(SampledDay { series: [a?, b?] })
        }
        SamplingPlan::Replay(times) => {
            let first = times
                .iter()
                .map(|ts| ts.first().copied().ok_or_else(|| Error::InsufficientData("empty replayed tick list".into())))
                .collect::<Result<Vec<f64>>>()?;
            let start = (first[0].max(first[1]).max(0.0) / grid_dt).ceil() * grid_dt;
            if start >= horizon {
                return Err(Error::InsufficientData("replayed ticks start after the session ends".into()));
            }
            let n = ((horizon - start) / grid_dt).round() as usize + 1;
            let path = simulate_paths(pair, grid_dt, horizon, grid_dt, seed, day)?;
            let series = [0, 1].map(|a| {
                let ticks: Vec<f64> = times[a].iter().copied().filter(|&t| t <= horizon).collect();
                previous_tick(&path, a, &ticks, start, n)
            });
            let [a, b] = series;
            Ok(SampledDay { series: [a?, b?] })
        }
    }
}

/// Writes a stepped series as `t,level`.
pub fn write_stepped_csv<W: Write>(w: W, s: &SteppedSeries) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "level"])?;
    for (k, v) in s.levels.iter().enumerate() {
        out.write_record([format!("{}", s.start + k as f64 * s.grid_dt), format!("{v}")])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes tick times as a single `tick_time` column.
pub fn write_ticks_csv<W: Write>(w: W, times: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick_time"])?;
    for t in times {
        out.write_record([format!("{t}")])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `tick_time` column (strictly increasing).
pub fn read_ticks_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let t: f64 =
            rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Parse { line, message: "expected a tick time".into() })?;
        if out.last().is_some_and(|&p| t <= p) {
            return Err(Error::Parse { line, message: format!("tick time {t} not increasing") });
        }
        out.push(t);
    }
    Ok(out)
}
