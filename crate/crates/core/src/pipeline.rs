//! Tick ingestion, session windowing, gridding, run configuration and the
//! end-to-end workflow that writes a reproducible artifact directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::async_theory::{async_covariance, async_rho, async_variance, discrete_cross_prediction, AsyncKernel};
use crate::error::{Error, Result};
use crate::estimation::{
    self, correlogram, epps_curve, estimate_rate_pooled, estimate_spectrum, Correlogram, EppsCurve, RateEstimate, SpectrumEstimate,
};
use crate::exec::{self, Exec};
use crate::filtering::{apply_filter, filter_auto, filtered_correlogram, filtered_epps_curve, FilterSpec};
use crate::fitting::{self, chi2_ratio, Family, FitOptions, FitResult};
use crate::kernels::{parse_model_file, CorrelationModel, ModelPair};
use crate::sampling::{
    draw_poisson_times, previous_tick, previous_tick_ticks, rng_for, sample_day, simulate_paths, SamplingPlan, SteppedSeries, Stream,
};

/// Intraday window kept for analysis. Times are seconds after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSpec {
    pub open: f64,
    pub open_skip: f64,
    pub close_skip: f64,
    pub length: f64,
    /// Exchange close; when set, ticks after `close − close_skip` are dropped as well.
    pub close: Option<f64>,
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec { open: 34_200.0, open_skip: 2_700.0, close_skip: 1_260.0, length: 20_000.0, close: None }
    }
}

impl SessionSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.open, self.open_skip, self.close_skip, self.length].iter().all(|v| v.is_finite());
        if !finite || !(self.length > 0.0) || self.open_skip < 0.0 || self.close_skip < 0.0 {
            return Err(Error::Config(format!("invalid session {self:?}")));
        }
        let (a, b) = self.window();
        if !(b > a) {
            return Err(Error::Config(format!("session window [{a}, {b}] is empty")));
        }
        Ok(())
    }

    /// `[open + open_skip, open + open_skip + length]`, cut at `close − close_skip`.
    pub fn window(&self) -> (f64, f64) {
        let start = self.open + self.open_skip;
        let mut end = start + self.length;
        if let Some(c) = self.close {
            end = end.min(c - self.close_skip);
        }
        (start, end)
    }
}

/// One asset over one session; times are seconds from the window start.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    pub asset: String,
    pub day: String,
    pub times: Vec<f64>,
    pub log_prices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Accepted asset ids; records of any other asset are rejected.
    pub assets: Option<Vec<String>>,
    /// Stop at the first bad record instead of collecting all of them.
    pub fail_fast: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TickLoad {
    /// Sorted by `(asset, day)`.
    pub series: Vec<TickSeries>,
    pub rejected: Vec<RecordError>,
    pub outside_window: usize,
}

impl TickLoad {
    /// Ticks per asset over the whole sample.
    pub fn tick_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for s in &self.series {
            *out.entry(s.asset.clone()).or_insert(0) += s.times.len();
        }
        out
    }

    /// Converts collected rejections into an error.
    pub fn check(&self) -> Result<()> {
        match self.rejected.first() {
            None => Ok(()),
            Some(first) => Err(Error::Records { count: self.rejected.len(), line: first.line as usize, message: first.message.clone() }),
        }
    }
}

pub const TICK_HEADER: [&str; 4] = ["asset", "day", "time_sec", "price"];

/// Reads a tick file (`asset,day,time_sec,price`, time in seconds after
/// midnight), keeps ticks inside the session window, rebases their times to
/// the window start and takes logs of prices.
pub fn load_ticks(path: &Path, session: &SessionSpec, opts: &LoadOptions) -> Result<TickLoad> {
    parse_ticks(fs::File::open(path)?, session, opts)
}

pub fn parse_ticks<R: Read>(r: R, session: &SessionSpec, opts: &LoadOptions) -> Result<TickLoad> {
    session.validate()?;
    let (start, end) = session.window();
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(TICK_HEADER) {
        return Err(Error::Parse { line: 1, message: format!("expected header `{}`", TICK_HEADER.join(",")) });
    }
    let known: Option<BTreeSet<&str>> = opts.assets.as_ref().map(|v| v.iter().map(String::as_str).collect());
    let mut last: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut kept: BTreeMap<(String, String), TickSeries> = BTreeMap::new();
    let mut load = TickLoad::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<(String, String, f64, f64), String> {
            if rec.len() != 4 {
                return Err(format!("expected 4 fields, found {}", rec.len()));
            }
            let asset = rec[0].trim().to_string();
            let day = rec[1].trim().to_string();
            if asset.is_empty() || day.is_empty() {
                return Err("empty asset or day".into());
            }
            if known.as_ref().is_some_and(|k| !k.contains(asset.as_str())) {
                return Err(format!("unknown asset `{asset}`"));
            }
            let time: f64 = rec[2].trim().parse().map_err(|_| format!("bad time `{}`", &rec[2]))?;
            let price: f64 = rec[3].trim().parse().map_err(|_| format!("bad price `{}`", &rec[3]))?;
            if !time.is_finite() {
                return Err(format!("bad time `{}`", &rec[2]));
            }
            if !(price > 0.0) || !price.is_finite() {
                return Err(format!("nonpositive price {price}"));
            }
            Ok((asset, day, time, price))
        })();
        let (asset, day, time, price) = match parsed {
            Ok(v) => v,
            Err(message) => {
                reject(&mut load, line, message, opts.fail_fast)?;
                continue;
            }
        };
        let key = (asset, day);
        if let Some(&prev) = last.get(&key) {
            if time <= prev {
                reject(&mut load, line, format!("time {time} not after {prev} for {}/{}", key.0, key.1), opts.fail_fast)?;
                continue;
            }
        }
        last.insert(key.clone(), time);
        if time < start || time > end {
            load.outside_window += 1;
            continue;
        }
        let entry = kept.entry(key.clone()).or_insert_with(|| TickSeries {
            asset: key.0.clone(),
            day: key.1.clone(),
            times: Vec::new(),
            log_prices: Vec::new(),
        });
        entry.times.push(time - start);
        entry.log_prices.push(price.ln());
    }
    load.series = kept.into_values().collect();
    Ok(load)
}

fn reject(load: &mut TickLoad, line: u64, message: String, fail_fast: bool) -> Result<()> {
    if fail_fast {
        return Err(Error::Records { count: 1, line: line as usize, message });
    }
    load.rejected.push(RecordError { line, message });
    Ok(())
}

fn grid_steps(length: f64, grid_dt: f64) -> Result<usize> {
    let x = length / grid_dt;
    let r = x.round();
    if !(grid_dt > 0.0) || r < 1.0 || (x - r).abs() > 1e-9 * x.max(1.0) {
        return Err(Error::Config(format!("session length {length} is not a multiple of grid_dt {grid_dt}")));
    }
    Ok(r as usize)
}

/// Previous-tick levels on `0, grid_dt, …, length`. Grid points before the
/// first tick take its price.
pub fn grid_ticks(ts: &TickSeries, grid_dt: f64, length: f64) -> Result<SteppedSeries> {
    if ts.times.len() < 2 {
        return Err(Error::InsufficientData(format!("{}/{}: {} tick(s) in window", ts.asset, ts.day, ts.times.len())));
    }
    let n = grid_steps(length, grid_dt)? + 1;
    let (mut times, mut values) = (ts.times.clone(), ts.log_prices.clone());
    if times[0] > 0.0 {
        times.insert(0, 0.0);
        values.insert(0, values[0]);
    }
    let mut s = previous_tick_ticks(&times, &values, grid_dt, 0.0, n)?;
    s.tick_times = ts.times.clone();
    Ok(s)
}

fn from_increments(z: &[f64], template: &SteppedSeries) -> SteppedSeries {
    let mut levels = Vec::with_capacity(z.len() + 1);
    let mut x = 0.0;
    levels.push(x);
    for v in z {
        x += v;
        levels.push(x);
    }
    SteppedSeries { levels, ..template.clone() }
}

/// Previous-tick gridding followed by standardising the day's increments.
pub fn grid_and_normalize(ts: &TickSeries, grid_dt: f64, length: f64) -> Result<SteppedSeries> {
    let s = grid_ticks(ts, grid_dt, length)?;
    let z = estimation::normalize(&s.increments())
        .ok_or_else(|| Error::DegenerateVariance(format!("{}/{}: constant price over the window", ts.asset, ts.day)))?;
    Ok(from_increments(&z, &s))
}

/// Scope of the unit-variance normalisation of increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    PerDay,
    /// One mean and variance per asset over all its days.
    Global,
    None,
}

/// Kernels of a synthetic pair: either inline tables or a model file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub cross: Option<CorrelationModel>,
    #[serde(default)]
    pub auto_i: Option<CorrelationModel>,
    #[serde(default)]
    pub auto_j: Option<CorrelationModel>,
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<ModelPair> {
        match (&self.file, self.cross) {
            (Some(path), None) if self.auto_i.is_none() && self.auto_j.is_none() => parse_model_file(&fs::read_to_string(path)?),
            (None, Some(cross)) => ModelPair::new(
                cross,
                self.auto_i.unwrap_or(CorrelationModel::brownian(1.0)),
                self.auto_j.unwrap_or(CorrelationModel::brownian(1.0)),
            ),
            _ => Err(Error::Config("model needs either `file` or an inline `cross` table".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    /// Simulated pair sampled by independent Poisson clocks.
    Synthetic { days: usize, assets: [String; 2], rates: [f64; 2], model: ModelSpec },
    /// Simulated pair sampled at the tick times of two assets of a tick file.
    Replay {
        ticks: PathBuf,
        assets: [String; 2],
        model: ModelSpec,
        #[serde(default)]
        days: Option<usize>,
    },
    /// Observed prices from a tick file.
    Ticks {
        path: PathBuf,
        #[serde(default)]
        assets: Option<Vec<String>>,
        #[serde(default)]
        fail_fast: bool,
    },
}

/// Top/bottom selection by total tick count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub size: usize,
}

fn default_seed() -> u64 {
    1
}
fn default_grid_dt() -> f64 {
    1.0
}
fn default_max_lag() -> usize {
    120
}
fn default_dt_grid() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 30.0, 60.0, 120.0, 300.0, 600.0, 1200.0]
}
fn default_fits() -> Vec<Family> {
    vec![Family::CrossRaw, Family::CrossAsync, Family::AutoRaw, Family::AutoAsync]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    #[serde(default = "default_dt_grid")]
    pub dt_grid: Vec<f64>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default = "default_fits")]
    pub fits: Vec<Family>,
    #[serde(default)]
    pub normalize: Normalization,
    #[serde(default)]
    pub session: SessionSpec,
    #[serde(default)]
    pub ensembles: Option<EnsembleSpec>,
    pub input: InputSpec,
}

impl RunConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.input {
            InputSpec::Synthetic { model, .. } => model.file.iter_mut().for_each(fix),
            InputSpec::Replay { ticks, model, .. } => {
                fix(ticks);
                model.file.iter_mut().for_each(fix);
            }
            InputSpec::Ticks { path, .. } => fix(path),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        RunConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.session.validate()?;
        let steps = grid_steps(self.session.length, self.grid_dt)?;
        if self.max_lag < 5 || 2 * self.max_lag >= steps {
            return Err(Error::Config(format!("max_lag {} must lie in 5..{}", self.max_lag, steps / 2)));
        }
        if self.dt_grid.is_empty() || self.dt_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("dt_grid must be nonempty and strictly increasing".into()));
        }
        for &dt in &self.dt_grid {
            if dt > self.session.length {
                return Err(Error::Config(format!("dt {dt} exceeds the session length")));
            }
            grid_steps(dt, self.grid_dt)?;
        }
        match &self.input {
            InputSpec::Synthetic { days, assets, rates, .. } => {
                if *days == 0 {
                    return Err(Error::Config("synthetic input needs days >= 1".into()));
                }
                if rates.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                    return Err(Error::Config(format!("rates must be finite and > 0, got {rates:?}")));
                }
                distinct(assets)?;
            }
            InputSpec::Replay { assets, .. } => distinct(assets)?,
            InputSpec::Ticks { .. } => {}
        }
        if matches!(self.ensembles, Some(EnsembleSpec { size: 0 })) {
            return Err(Error::Config("ensemble size must be >= 1".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.session.length / self.grid_dt).round() as usize
    }
}

fn distinct(assets: &[String; 2]) -> Result<()> {
    if assets[0] == assets[1] {
        return Err(Error::Config(format!("assets must differ, got `{}` twice", assets[0])));
    }
    Ok(())
}

/// One usable asset-day.
#[derive(Debug, Clone)]
struct DayData {
    series: SteppedSeries,
    increments: Vec<f64>,
    ticks: usize,
}

type AssetDays = BTreeMap<String, DayData>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skip {
    pub item: String,
    pub reason: String,
}

/// Everything estimated for one pair.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub i: String,
    pub j: String,
    pub ensemble: Option<String>,
    pub n_days: usize,
    pub rates: [f64; 2],
    pub spectrum: SpectrumEstimate,
    pub filtered_spectrum: SpectrumEstimate,
    pub raw_correlogram: Correlogram,
    pub filtered_correlogram: Correlogram,
    pub raw_epps: EppsCurve,
    pub filtered_epps: EppsCurve,
    pub fits: Vec<FitResult>,
    pub chi2_ratio: Option<f64>,
    pub notes: Vec<Skip>,
}

#[derive(Debug, Clone)]
struct AssetAnalysis {
    name: String,
    rate: RateEstimate,
    n_days: usize,
    auto: Option<Correlogram>,
    fits: Vec<FitResult>,
}

fn normalize_assets(assets: &mut BTreeMap<String, AssetDays>, mode: Normalization, skips: &mut Vec<Skip>) {
    for (name, days) in assets.iter_mut() {
        let mut bad = Vec::new();
        match mode {
            Normalization::None => {}
            Normalization::PerDay => {
                for (day, d) in days.iter_mut() {
                    match estimation::normalize(&d.increments) {
                        Some(z) => {
                            d.series = from_increments(&z, &d.series);
                            d.increments = z;
                        }
                        None => bad.push(day.clone()),
                    }
                }
            }
            Normalization::Global => {
                let all: Vec<f64> = days.values().flat_map(|d| d.increments.iter().copied()).collect();
                let m = exec::mean(&all);
                let dev: Vec<f64> = all.iter().map(|v| (v - m) * (v - m)).collect();
                let sd = (exec::pairwise_sum(&dev) / all.len().max(1) as f64).sqrt();
                if sd > 0.0 {
                    for d in days.values_mut() {
                        let z: Vec<f64> = d.increments.iter().map(|v| (v - m) / sd).collect();
                        d.series = from_increments(&z, &d.series);
                        d.increments = z;
                    }
                } else {
                    bad.extend(days.keys().cloned());
                }
            }
        }
        for day in bad {
            days.remove(&day);
            skips.push(Skip { item: format!("{name}/{day}"), reason: "constant price over the window".into() });
        }
    }
}

fn pad_front(s: SteppedSeries, n_points: usize) -> SteppedSeries {
    let missing = n_points.saturating_sub(s.levels.len());
    if missing == 0 {
        return s;
    }
    let mut levels = vec![s.levels[0]; missing];
    levels.extend_from_slice(&s.levels);
    SteppedSeries { start: s.start - missing as f64 * s.grid_dt, levels, ..s }
}

fn day_data(s: SteppedSeries, ticks: usize) -> DayData {
    DayData { increments: s.increments(), series: s, ticks }
}

fn simulated_inputs(
    cfg: &RunConfig,
    pair: &ModelPair,
    assets: &[String; 2],
    day_ids: &[String],
    plans: Vec<SamplingPlan>,
    exec: Exec,
) -> Result<BTreeMap<String, AssetDays>> {
    let n_points = cfg.steps() + 1;
    let days = exec.try_map(day_ids.len(), |d| {
        let day = sample_day(pair, &plans[d], cfg.grid_dt, cfg.session.length, cfg.seed, d as u64)?;
        Ok::<_, Error>(day.series.map(|s| {
            let ticks = s.tick_times.iter().filter(|&&t| t > 0.0 && t <= cfg.session.length).count();
            day_data(pad_front(s, n_points), ticks)
        }))
    })?;
    let mut out: BTreeMap<String, AssetDays> = BTreeMap::new();
    for (id, [a, b]) in day_ids.iter().zip(days) {
        out.entry(assets[0].clone()).or_default().insert(id.clone(), a);
        out.entry(assets[1].clone()).or_default().insert(id.clone(), b);
    }
    Ok(out)
}

/// Loads or simulates all asset-days, unnormalised.
fn gather_inputs(
    cfg: &RunConfig,
    exec: Exec,
    skips: &mut Vec<Skip>,
    rejected: &mut Vec<RecordError>,
    counts: &mut BTreeMap<String, usize>,
) -> Result<BTreeMap<String, AssetDays>> {
    match &cfg.input {
        InputSpec::Synthetic { days, assets, rates, model } => {
            let pair = model.resolve()?;
            let ids: Vec<String> = (0..*days).map(|d| format!("d{d:04}")).collect();
            let plans = vec![SamplingPlan::Poisson(*rates); *days];
            simulated_inputs(cfg, &pair, assets, &ids, plans, exec)
        }
        InputSpec::Replay { ticks, assets, model, days } => {
            let pair = model.resolve()?;
            let load = load_ticks(ticks, &cfg.session, &LoadOptions { assets: None, fail_fast: false })?;
            rejected.extend(load.rejected.iter().cloned());
            let by_day = |a: &String| -> BTreeMap<String, Vec<f64>> {
                load.series.iter().filter(|s| &s.asset == a).map(|s| (s.day.clone(), s.times.clone())).collect()
            };
            let (ti, tj) = (by_day(&assets[0]), by_day(&assets[1]));
            for a in assets {
                if !load.series.iter().any(|s| &s.asset == a) {
                    return Err(Error::Config(format!("asset `{a}` not found in {}", ticks.display())));
                }
            }
            let mut ids: Vec<String> = ti.keys().filter(|d| tj.contains_key(*d)).cloned().collect();
            if let Some(n) = days {
                ids.truncate(*n);
            }
            let plans = ids.iter().map(|d| SamplingPlan::Replay([ti[d].clone(), tj[d].clone()])).collect();
            simulated_inputs(cfg, &pair, assets, &ids, plans, exec)
        }
        InputSpec::Ticks { path, assets, fail_fast } => {
            let load = load_ticks(path, &cfg.session, &LoadOptions { assets: assets.clone(), fail_fast: *fail_fast })?;
            rejected.extend(load.rejected.iter().cloned());
            if let Some(list) = assets {
                let present = load.tick_counts();
                if let Some(missing) = list.iter().find(|a| !present.contains_key(*a)) {
                    return Err(Error::Config(format!("asset `{missing}` has no ticks in {}", path.display())));
                }
            }
            *counts = load.tick_counts();
            let gridded = exec.map(load.series.len(), |k| grid_ticks(&load.series[k], cfg.grid_dt, cfg.session.length));
            let mut out: BTreeMap<String, AssetDays> = BTreeMap::new();
            for (ts, g) in load.series.iter().zip(gridded) {
                match g {
                    Ok(s) => {
                        out.entry(ts.asset.clone()).or_default().insert(ts.day.clone(), day_data(s, ts.times.len()));
                    }
                    Err(e) => skips.push(Skip { item: format!("{}/{}", ts.asset, ts.day), reason: e.to_string() }),
                }
            }
            Ok(out)
        }
    }
}

/// `(asset, ensemble label)` after top/bottom selection by tick count.
fn select_ensembles(counts: &BTreeMap<String, usize>, size: usize) -> Result<BTreeMap<String, String>> {
    if 2 * size > counts.len() {
        return Err(Error::Config(format!("ensembles of {size} need {} assets, found {}", 2 * size, counts.len())));
    }
    let mut ranked: Vec<(&String, usize)> = counts.iter().map(|(a, c)| (a, *c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut out = BTreeMap::new();
    for (a, _) in &ranked[..size] {
        out.insert((*a).clone(), "T".to_string());
    }
    for (a, _) in &ranked[ranked.len() - size..] {
        out.insert((*a).clone(), "L".to_string());
    }
    Ok(out)
}

fn analyze_asset(cfg: &RunConfig, name: &str, days: &AssetDays, exec: Exec) -> AssetAnalysis {
    let counts: Vec<usize> = days.values().map(|d| d.ticks).collect();
    let rate = estimate_rate_pooled(&counts, cfg.session.length).unwrap_or(RateEstimate { lambda: f64::NAN, stderr: f64::NAN });
    let zz: Vec<(Vec<f64>, Vec<f64>)> = days.values().map(|d| (d.increments.clone(), d.increments.clone())).collect();
    let auto = correlogram(&zz, cfg.grid_dt, cfg.max_lag, false, true, exec).ok();
    AssetAnalysis { name: name.to_string(), rate, n_days: days.len(), auto, fits: Vec::new() }
}

fn fit_notes(cg: &Correlogram, families: &[Family], li: f64, lj: f64, label: &str) -> (Vec<FitResult>, Vec<Skip>) {
    let (mut fits, mut notes) = (Vec::new(), Vec::new());
    for &f in families {
        match fitting::fit(cg, f, li, lj, &FitOptions::default()) {
            Ok(r) => fits.push(r),
            Err(e) => notes.push(Skip { item: format!("{label} {f}"), reason: e.to_string() }),
        }
    }
    (fits, notes)
}

/// Spectra, correlograms, Epps curves and cross fits of one pair over the
/// days both assets share. `rates` are in ticks per second.
fn analyze_pair(
    cfg: &RunConfig,
    (i, di): (&str, &AssetDays),
    (j, dj): (&str, &AssetDays),
    rates: [f64; 2],
    exec: Exec,
) -> Result<PairAnalysis> {
    let common: Vec<&String> = di.keys().filter(|d| dj.contains_key(*d)).collect();
    if common.is_empty() {
        return Err(Error::InsufficientData(format!("{i} and {j} share no usable day")));
    }
    if rates.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InsufficientData(format!("{i}/{j}: no rate estimate")));
    }
    let incs = |d: &AssetDays| -> Vec<Vec<f64>> { common.iter().map(|k| d[*k].increments.clone()).collect() };
    let (zi, zj) = (incs(di), incs(dj));
    let cross: Vec<(Vec<f64>, Vec<f64>)> = zi.iter().cloned().zip(zj.iter().cloned()).collect();
    let auto_i: Vec<(Vec<f64>, Vec<f64>)> = zi.iter().map(|z| (z.clone(), z.clone())).collect();
    let auto_j: Vec<(Vec<f64>, Vec<f64>)> = zj.iter().map(|z| (z.clone(), z.clone())).collect();
    let stepped: Vec<(SteppedSeries, SteppedSeries)> = common.iter().map(|k| (di[*k].series.clone(), dj[*k].series.clone())).collect();

    let t = cfg.steps();
    let mut spectrum = estimate_spectrum(&cross, t, cfg.grid_dt, exec)?;
    spectrum.rates = Some(rates);
    let si = estimate_spectrum(&auto_i, t, cfg.grid_dt, exec)?;
    let sj = estimate_spectrum(&auto_j, t, cfg.grid_dt, exec)?;
    let filtered_spectrum = apply_filter(&spectrum, rates[0], rates[1], &cfg.filter)?;
    let fi = filter_auto(&si, rates[0], &cfg.filter)?;
    let fj = filter_auto(&sj, rates[1], &cfg.filter)?;

    let raw_correlogram = correlogram(&cross, cfg.grid_dt, cfg.max_lag, false, false, exec)?;
    let mut filtered = filtered_correlogram(&filtered_spectrum, cfg.max_lag, false)?;
    filtered.lag_grid = raw_correlogram.lag_grid.clone();
    let raw_epps = epps_curve(&stepped, &cfg.dt_grid, exec)?;
    let filtered_epps = filtered_epps_curve(&filtered_spectrum, &fi, &fj, &cfg.dt_grid)?;

    let cross_families: Vec<Family> = cfg.fits.iter().copied().filter(|f| !f.is_auto()).collect();
    let (fits, notes) = fit_notes(&raw_correlogram, &cross_families, rates[0], rates[1], &format!("{i}/{j}"));
    let by = |f: Family| fits.iter().find(|r| r.family == f);
    let chi2_ratio = match (by(Family::CrossRaw), by(Family::CrossAsync)) {
        (Some(r), Some(a)) => chi2_ratio(r, a).ok(),
        _ => None,
    };
    Ok(PairAnalysis {
        i: i.to_string(),
        j: j.to_string(),
        ensemble: None,
        n_days: common.len(),
        rates,
        spectrum,
        filtered_spectrum,
        raw_correlogram,
        filtered_correlogram: filtered,
        raw_epps,
        filtered_epps,
        fits,
        chi2_ratio,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Written last as `manifest.json`; lists every other file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: Option<String>,
    pub settings: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub skipped: Vec<Skip>,
}

/// In-memory output tree, flushed in sorted path order.
#[derive(Debug, Default)]
struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    fn add<F: FnOnce(&mut Vec<u8>) -> Result<()>>(&mut self, path: String, write: F) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.files.insert(path, buf);
        Ok(())
    }

    fn add_rows(&mut self, path: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        self.add(path.to_string(), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })
    }

    fn finish(self, dir: &Path, mut manifest: Manifest) -> Result<Manifest> {
        fs::create_dir_all(dir)?;
        for (path, bytes) in &self.files {
            let full = dir.join(path);
            if let Some(parent) = full.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&full, bytes)?;
            manifest.files.push(FileEntry { path: path.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        }
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json)?;
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_key(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Runs the configured workflow and writes all artifacts under `out`.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, exec: Exec) -> Result<Manifest> {
    cfg.validate()?;
    let mut skipped = Vec::new();
    let mut rejected = Vec::new();
    let mut counts = BTreeMap::new();
    let mut assets = gather_inputs(cfg, exec, &mut skipped, &mut rejected, &mut counts)?;
    normalize_assets(&mut assets, cfg.normalize, &mut skipped);

    let labels = match cfg.ensembles {
        Some(EnsembleSpec { size }) => {
            if counts.is_empty() {
                for (name, days) in &assets {
                    counts.insert(name.clone(), days.values().map(|d| d.ticks).sum());
                }
            }
            let labels = select_ensembles(&counts, size)?;
            assets.retain(|name, _| labels.contains_key(name));
            Some(labels)
        }
        None => None,
    };
    assets.retain(|name, days| {
        if days.is_empty() {
            skipped.push(Skip { item: name.clone(), reason: "no usable day".into() });
        }
        !days.is_empty()
    });
    let names: Vec<&String> = assets.keys().collect();

    let auto_families: Vec<Family> = cfg.fits.iter().copied().filter(|f| f.is_auto()).collect();
    let mut per_asset = exec.map(names.len(), |k| {
        let mut a = analyze_asset(cfg, names[k], &assets[names[k]], exec);
        if let Some(cg) = &a.auto {
            let (fits, notes) = fit_notes(cg, &auto_families, a.rate.lambda, a.rate.lambda, names[k]);
            a.fits = fits;
            return (a, notes);
        }
        (a, Vec::new())
    });
    let rate_of: BTreeMap<String, f64> = per_asset.iter().map(|(a, _)| (a.name.clone(), a.rate.lambda)).collect();

    let pairs: Vec<(usize, usize)> = (0..names.len()).flat_map(|a| (a + 1..names.len()).map(move |b| (a, b))).collect();
    let analyses = exec.map(pairs.len(), |p| {
        let (a, b) = (names[pairs[p].0], names[pairs[p].1]);
        analyze_pair(cfg, (a, &assets[a]), (b, &assets[b]), [rate_of[a], rate_of[b]], exec)
    });

    let mut art = Artifacts::default();
    let mut fit_rows: Vec<(String, String, FitResult)> = Vec::new();
    let mut chi_rows = Vec::new();
    let mut rate_rows = Vec::new();
    for (a, notes) in per_asset.drain(..) {
        skipped.extend(notes);
        rate_rows.push(vec![a.name.clone(), num(a.rate.lambda), num(a.rate.stderr), a.n_days.to_string()]);
        if let Some(cg) = &a.auto {
            art.add(format!("correlograms/{}_auto.csv", file_key(&a.name)), |b| estimation::write_correlogram_csv(b, cg))?;
        }
        fit_rows.extend(a.fits.into_iter().map(|f| (a.name.clone(), a.name.clone(), f)));
    }
    for (p, res) in pairs.iter().zip(analyses) {
        let (i, j) = (names[p.0], names[p.1]);
        let mut pa = match res {
            Ok(pa) => pa,
            Err(e) => {
                skipped.push(Skip { item: format!("{i}/{j}"), reason: e.to_string() });
                continue;
            }
        };
        pa.ensemble = labels.as_ref().map(|l| format!("{}-{}", l[i], l[j]));
        let key = format!("{}__{}", file_key(i), file_key(j));
        art.add(format!("spectra/{key}.csv"), |b| estimation::write_spectrum_csv(b, &pa.spectrum))?;
        art.add(format!("spectra/{key}_filtered.csv"), |b| estimation::write_spectrum_csv(b, &pa.filtered_spectrum))?;
        art.add(format!("correlograms/{key}_raw.csv"), |b| estimation::write_correlogram_csv(b, &pa.raw_correlogram))?;
        art.add(format!("correlograms/{key}_filtered.csv"), |b| estimation::write_correlogram_csv(b, &pa.filtered_correlogram))?;
        art.add(format!("epps/{key}_raw.csv"), |b| estimation::write_epps_csv(b, &pa.raw_epps))?;
        art.add(format!("epps/{key}_filtered.csv"), |b| estimation::write_epps_csv(b, &pa.filtered_epps))?;
        let chi = |f: Family| pa.fits.iter().find(|r| r.family == f).map_or(String::new(), |r| num(r.chi2));
        chi_rows.push(vec![
            i.clone(),
            j.clone(),
            pa.ensemble.clone().unwrap_or_default(),
            pa.n_days.to_string(),
            chi(Family::CrossRaw),
            chi(Family::CrossAsync),
            pa.chi2_ratio.map_or(String::new(), num),
        ]);
        skipped.append(&mut pa.notes);
        fit_rows.extend(pa.fits.into_iter().map(|f| (i.clone(), j.clone(), f)));
    }
    art.add("fits.csv".into(), |b| fitting::write_fit_csv(b, &fit_rows))?;
    art.add_rows("chi2.csv", &["i", "j", "ensemble", "n_days", "chi2_raw", "chi2_async", "ratio"], chi_rows)?;
    art.add_rows("rates.csv", &["asset", "lambda", "stderr", "n_days"], rate_rows)?;
    if let Some(l) = &labels {
        let rows = l.iter().map(|(a, e)| vec![a.clone(), e.clone(), counts.get(a).copied().unwrap_or(0).to_string()]).collect();
        art.add_rows("ensembles.csv", &["asset", "ensemble", "ticks"], rows)?;
    }
    if !rejected.is_empty() {
        let rows = rejected.iter().map(|r| vec![r.line.to_string(), r.message.clone()]).collect();
        art.add_rows("rejected_records.csv", &["line", "message"], rows)?;
    }

    let config_json = serde_json::to_vec(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let manifest = Manifest {
        tool: "epps".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config_sha256: Some(sha256_hex(&config_json)),
        settings: serde_json::json!({
            "grid_dt": cfg.grid_dt,
            "max_lag": cfg.max_lag,
            "session": cfg.session,
            "normalize": cfg.normalize,
            "filter": cfg.filter,
            "fit_weights": "inverse across-day variance with >= 5 days, uniform otherwise",
        }),
        files: Vec::new(),
        skipped,
    };
    art.finish(out, manifest)
}

/// Plot data for the synthetic figures: sampled path, theoretical Epps
/// curves, and raw versus filtered estimates of a delta-correlated pair
/// sampled at rates 1 and 0.05 over `days` sessions.
pub fn figures(out: &Path, seed: u64, days: usize, exec: Exec) -> Result<Manifest> {
    if days == 0 {
        return Err(Error::InvalidArgument("figures need days >= 1".into()));
    }
    let mut art = Artifacts::default();
    let log_grid: Vec<f64> = (0..=60).map(|k| 10f64.powf(-1.0 + 2.7 * k as f64 / 60.0)).collect();

    // sampled path
    {
        let pair = ModelPair::with_brownian_autos(CorrelationModel::brownian(0.0))?;
        let (grid_dt, horizon, lambda) = (0.1, 200.0, 0.05);
        let path = simulate_paths(&pair, grid_dt, horizon, 10.0 / lambda, seed, 0)?;
        let mut rng = rng_for(seed, 0, Stream::Ticks(0));
        let ticks = draw_poisson_times(lambda, horizon, 10.0 / lambda, &mut rng)?;
        let n = (horizon / grid_dt).round() as usize + 1;
        let s = previous_tick(&path, 0, &ticks, 0.0, n)?;
        let lead = (-path.start / grid_dt).round() as usize;
        let rows = (0..n).map(|k| vec![num(k as f64 * grid_dt), num(path.levels[0][lead + k]), num(s.levels[k])]).collect();
        art.add_rows("fig1_paths.csv", &["t", "synchronous", "sampled"], rows)?;
    }

    // lagged processes
    {
        let cases = [(0.0, 1.0), (2.0, f64::INFINITY), (2.0, 1.0)];
        let pairs = cases.map(|(tau, _)| ModelPair::with_brownian_autos(CorrelationModel::lagged_delta(1.0, tau)));
        let mut rows = Vec::new();
        for &dt in &log_grid {
            let mut row = vec![num(dt)];
            for (pair, (_, l)) in pairs.iter().zip(cases) {
                let pair = pair.as_ref().map_err(|e| Error::InvalidModel(e.to_string()))?;
                row.push(num(async_rho(pair, &AsyncKernel::new(l, l)?, dt)?));
            }
            rows.push(row);
        }
        art.add_rows("fig2_rho.csv", &["dt", "tau0_lambda1", "tau2_sync", "tau2_lambda1"], rows)?;
    }

    // different widths: covariance and variance per unit horizon
    {
        let cov_cases = [(f64::INFINITY, 0.4), (f64::INFINITY, 0.8), (1.0, 0.4), (1.0, 0.8), (1.0, 0.0)];
        let var_cases = [(f64::INFINITY, 0.3), (1.0, 0.0), (1.0, 0.3)];
        let (mut cov_rows, mut var_rows) = (Vec::new(), Vec::new());
        for &dt in &log_grid {
            let mut row = vec![num(dt)];
            for (l, xi) in cov_cases {
                let m = CorrelationModel::exponential(1.0, xi, 0.0);
                row.push(num(async_covariance(&m, &AsyncKernel::new(l, l)?, dt)? / dt));
            }
            cov_rows.push(row);
            let mut row = vec![num(dt)];
            for (l, xi) in var_cases {
                row.push(num(async_variance(&CorrelationModel::exponential(1.0, xi, 0.0), l, dt)? / dt));
            }
            var_rows.push(row);
        }
        art.add_rows(
            "fig3_covariance.csv",
            &["dt", "sync_xi0.4", "sync_xi0.8", "lambda1_xi0.4", "lambda1_xi0.8", "lambda1_xi0"],
            cov_rows,
        )?;
        art.add_rows("fig3_variance.csv", &["dt", "sync_xi0.3", "lambda1_xi0", "lambda1_xi0.3"], var_rows)?;
    }

    // asymmetric sampling of a delta-correlated pair
    {
        let c = 0.5;
        let rates = [1.0, 0.05];
        let cfg = RunConfig {
            seed,
            grid_dt: 1.0,
            max_lag: 60,
            dt_grid: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0],
            filter: FilterSpec::default(),
            fits: Vec::new(),
            normalize: Normalization::None,
            session: SessionSpec::default(),
            ensembles: None,
            input: InputSpec::Synthetic {
                days,
                assets: ["i".into(), "j".into()],
                rates,
                model: ModelSpec { cross: Some(CorrelationModel::brownian(c)), ..ModelSpec::default() },
            },
        };
        let mut ignore = (Vec::new(), Vec::new(), BTreeMap::new());
        let assets = gather_inputs(&cfg, exec, &mut ignore.0, &mut ignore.1, &mut ignore.2)?;
        let pa = analyze_pair(&cfg, ("i", &assets["i"]), ("j", &assets["j"]), rates, exec)?;
        let k = AsyncKernel::new(rates[0], rates[1])?;
        let theory = discrete_cross_prediction(&CorrelationModel::brownian(c), &k, cfg.grid_dt, cfg.steps(), cfg.max_lag)?;
        let raw = &pa.raw_correlogram;
        let filt = &pa.filtered_correlogram;
        let m = cfg.max_lag as i64;
        let asym = |cg: &Correlogram, k: i64| (cg.at_lag(k) - cg.at_lag(-k)) / 2.0;
        let rows = (-m..=m)
            .map(|k| {
                let idx = (k + m) as usize;
                vec![num(k as f64), num(raw.values[idx]), num(raw.stderr[idx]), num(theory[idx])]
            })
            .collect();
        art.add_rows("figgek_right.csv", &["tau", "empirical", "stderr", "theory"], rows)?;
        let rows = (-m..=m)
            .map(|k| {
                let idx = (k + m) as usize;
                vec![num(k as f64), num(raw.values[idx]), num(filt.values[idx]), num(asym(raw, k)), num(asym(filt, k))]
            })
            .collect();
        art.add_rows("fig8_correlograms.csv", &["tau", "raw", "filtered", "raw_asym", "filtered_asym"], rows)?;
        let pair = ModelPair::with_brownian_autos(CorrelationModel::brownian(c))?;
        let rows = cfg
            .dt_grid
            .iter()
            .enumerate()
            .map(|(n, &dt)| {
                let opt = |v: Option<f64>| v.map_or(String::new(), num);
                Ok(vec![
                    num(dt),
                    opt(pa.raw_epps.rho[n]),
                    opt(pa.raw_epps.stderr[n]),
                    opt(pa.filtered_epps.rho[n]),
                    num(async_rho(&pair, &k, dt)?),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        art.add_rows("fig7_epps.csv", &["dt", "raw", "raw_stderr", "filtered", "theory_raw"], rows)?;
    }

    let manifest = Manifest {
        tool: "epps".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config_sha256: None,
        settings: serde_json::json!({ "days": days }),
        files: Vec::new(),
        skipped: Vec::new(),
    };
    art.finish(out, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TickLoad> {
        parse_ticks(text.as_bytes(), &SessionSpec::default(), &LoadOptions::default())
    }

    #[test]
    fn window_drops_open_skip_and_rebases() {
        let t0 = 34_200.0 + 2_700.0;
        let text = format!(
            "asset,day,time_sec,price\nA,2003-01-02,{},10\nA,2003-01-02,{},10.5\nA,2003-01-02,{},10.4\nA,2003-01-02,{},10.2\n",
            34_200.0 + 44.0 * 60.0,
            t0 + 1.5,
            t0 + 100.0,
            t0 + 20_001.0
        );
        let load = parse(&text).unwrap();
        assert_eq!(load.outside_window, 2);
        assert_eq!(load.series.len(), 1);
        assert_eq!(load.series[0].times, vec![1.5, 100.0]);
        assert!((load.series[0].log_prices[0] - 10.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bad_records_reported_with_lines() {
        let t0 = 36_900.0;
        let text =
            format!("asset,day,time_sec,price\nA,d1,{},10\nA,d1,{},-1\nA,d1,{},10\nA,d1,{},11\n", t0 + 5.0, t0 + 6.0, t0 + 4.0, t0 + 7.0);
        let load = parse(&text).unwrap();
        assert_eq!(load.rejected.len(), 2);
        assert_eq!(load.rejected[0].line, 3);
        assert!(load.rejected[0].message.contains("nonpositive"));
        assert_eq!(load.rejected[1].line, 4);
        assert_eq!(load.series[0].times.len(), 2);
        assert!(matches!(load.check(), Err(Error::Records { count: 2, line: 3, .. })));

        let strict = LoadOptions { fail_fast: true, ..LoadOptions::default() };
        let err = parse_ticks(text.as_bytes(), &SessionSpec::default(), &strict).unwrap_err();
        assert!(matches!(err, Error::Records { count: 1, line: 3, .. }));
        assert_eq!(err.exit_code(), 2);

        let only_b = LoadOptions { assets: Some(vec!["B".into()]), fail_fast: false };
        let load = parse_ticks(text.as_bytes(), &SessionSpec::default(), &only_b).unwrap();
        assert!(load.rejected.iter().all(|r| r.message.contains("unknown asset")));
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(parse("a,b,c,d\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn dense_ticks_reproduce_the_path() {
        let times: Vec<f64> = (0..=100).map(f64::from).collect();
        let prices: Vec<f64> = times.iter().map(|t| (t * 0.37).sin()).collect();
        let ts = TickSeries { asset: "A".into(), day: "d".into(), times, log_prices: prices.clone() };
        let g = grid_ticks(&ts, 1.0, 100.0).unwrap();
        assert_eq!(g.levels, prices);
    }

    #[test]
    fn normalisation_and_degenerate_days() {
        let ts = TickSeries { asset: "A".into(), day: "d".into(), times: vec![3.0, 7.5, 40.0], log_prices: vec![1.0, 1.2, 0.9] };
        let s = grid_and_normalize(&ts, 1.0, 50.0).unwrap();
        let z = s.increments();
        let m = exec::mean(&z);
        let v = z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / z.len() as f64;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
        let flat = TickSeries { log_prices: vec![1.0; 3], ..ts.clone() };
        assert!(matches!(grid_and_normalize(&flat, 1.0, 50.0), Err(Error::DegenerateVariance(_))));
        let one = TickSeries { times: vec![1.0], log_prices: vec![1.0], ..ts };
        assert!(matches!(grid_and_normalize(&one, 1.0, 50.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn ensembles_by_tick_count() {
        let counts: BTreeMap<String, usize> = [("a", 5), ("b", 50), ("c", 7), ("d", 1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let l = select_ensembles(&counts, 1).unwrap();
        assert_eq!(l.get("b").map(String::as_str), Some("T"));
        assert_eq!(l.get("d").map(String::as_str), Some("L"));
        assert_eq!(l.len(), 2);
        assert!(select_ensembles(&counts, 3).is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let text = r#"
            [input]
            kind = "synthetic"
            days = 2
            assets = ["A", "B"]
            rates = [1.0, 0.2]
            model = { cross = { delta_weight = 0.5 } }
        "#;
        let cfg = RunConfig::from_toml(text, Path::new(".")).unwrap();
        assert_eq!(cfg.max_lag, 120);
        assert_eq!(cfg.session.length, 20_000.0);
        assert_eq!(cfg.filter, FilterSpec::default());
        let bad = text.replace("days = 2", "days = 2\nbogus = 1");
        assert!(matches!(RunConfig::from_toml(&bad, Path::new(".")), Err(Error::Config(_))));
        let bad = format!("grid_dt = 0.7\n{text}");
        assert!(RunConfig::from_toml(&bad, Path::new(".")).is_err());
    }
}
