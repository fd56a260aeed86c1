#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epps::async_theory::{async_autocorr, async_covariance, async_cross_corr, async_cross_delta, async_rho, async_variance, AsyncKernel};
use epps::estimation::{read_correlogram_csv, read_spectrum_csv, write_correlogram_csv, write_spectrum_csv};
use epps::filtering::{apply_filter, filtered_correlogram, FilterMode, FilterSpec, Snr};
use epps::fitting::{fit, write_fit_csv, Family, FitOptions};
use epps::kernels::{parse_model_file, ModelPair};
use epps::pipeline::{figures, run_pipeline, InputSpec, RunConfig};
use epps::sampling::{read_ticks_csv, sample_day, simulate_paths, write_stepped_csv, write_ticks_csv, SamplingPlan};
use epps::{Error, Exec, Result};

#[derive(Parser)]
#[command(name = "epps", version, about = "Epps effect under asynchronous sampling")]
struct Cli {
    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; CSV goes to stdout when omitted (where possible).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synchronous pair on a grid.
    Simulate(SimulateArgs),
    /// Simulate and sample a pair, writing previous-tick series and tick times.
    Sample(SampleArgs),
    /// Closed-form curves.
    Theory(TheoryArgs),
    /// Raw and filtered estimates for one pair of a tick file.
    Estimate(EstimateArgs),
    /// Deconvolve a spectrum CSV.
    Filter(FilterArgs),
    /// Fit a correlogram CSV.
    Fit(FitArgs),
    /// Full workflow from a configuration file.
    Run,
    /// Plot data for the synthetic figures.
    Figures(FiguresArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file (`cross.c=0.5`, `cross.xi=10`, ...).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    grid_dt: f64,
    #[arg(long, default_value_t = 20_000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    day: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    sim: SimulateArgs,
    /// Poisson rates `λ_i,λ_j` in ticks per second.
    #[arg(long, value_delimiter = ',', num_args = 2, conflicts_with = "ticks")]
    rates: Option<Vec<f64>>,
    /// Two `tick_time` CSV files to replay.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    ticks: Option<Vec<PathBuf>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    Rho,
    Covariance,
    Variance,
    CrossCorr,
    AutoCorr,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(value_enum)]
    quantity: Quantity,
    #[arg(long)]
    model: PathBuf,
    /// Rate of asset i (`inf` for synchronous).
    #[arg(long, default_value_t = f64::INFINITY)]
    lambda_i: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    lambda_j: f64,
    /// First abscissa (Δt, or τ for correlation functions).
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long, default_value_t = 101)]
    points: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// Tick file (`asset,day,time_sec,price`).
    #[arg(long)]
    ticks: PathBuf,
    /// The two assets.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    assets: Vec<String>,
    #[arg(long, default_value_t = 120)]
    max_lag: usize,
}

#[derive(Args)]
struct FilterArgs {
    /// Spectrum CSV (`n,re,im`).
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long, value_enum, default_value = "wiener")]
    mode: ModeArg,
    /// `auto`, a number, or a file with one value per bin.
    #[arg(long, default_value = "auto")]
    snr: String,
    #[arg(long)]
    lambda_i: f64,
    #[arg(long)]
    lambda_j: f64,
    #[arg(long, default_value_t = 1.0)]
    grid_dt: f64,
    #[arg(long, default_value_t = 1)]
    n_days: usize,
    /// Also write the filtered correlogram up to this lag.
    #[arg(long)]
    max_lag: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Inverse,
    Wiener,
}

#[derive(Args)]
struct FitArgs {
    /// Correlogram CSV (`tau,value[,stderr]`).
    #[arg(long)]
    correlogram: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "cross_raw,cross_async")]
    family: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    lambda_i: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_j: f64,
    #[arg(long, default_value_t = 1)]
    n_days: usize,
    /// Labels for the `i,j` columns.
    #[arg(long, default_value = "i")]
    i: String,
    #[arg(long, default_value = "j")]
    j: String,
}

#[derive(Args)]
struct FiguresArgs {
    #[arg(long, default_value_t = 20)]
    days: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn exec(cli: &Cli) -> Exec {
    if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    }
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(1)
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| Error::InvalidArgument("--out <dir> is required".into()))
}

/// File `name` under `--out`, or stdout.
fn sink(cli: &Cli, name: &str) -> Result<Box<dyn Write>> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Box::new(io::BufWriter::new(fs::File::create(dir.join(name))?)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn load_model(path: &Path) -> Result<ModelPair> {
    parse_model_file(&fs::read_to_string(path)?)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => {
            let pair = load_model(&a.model)?;
            let path = simulate_paths(&pair, a.grid_dt, a.horizon, 0.0, seed(cli), a.day)?;
            let mut w = csv::Writer::from_writer(sink(cli, "path.csv")?);
            w.write_record(["t", "level_i", "level_j"])?;
            for k in 0..path.levels[0].len() {
                let t = path.start + k as f64 * path.grid_dt;
                w.write_record([t.to_string(), path.levels[0][k].to_string(), path.levels[1][k].to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Sample(a) => {
            let pair = load_model(&a.sim.model)?;
            let plan = match (&a.rates, &a.ticks) {
                (Some(r), None) => SamplingPlan::Poisson([r[0], r[1]]),
                (None, Some(files)) => {
                    let read = |p: &PathBuf| -> Result<Vec<f64>> { read_ticks_csv(fs::File::open(p)?) };
                    SamplingPlan::Replay([read(&files[0])?, read(&files[1])?])
                }
                _ => return Err(Error::InvalidArgument("give either --rates or --ticks".into())),
            };
            let out = require_out(cli)?;
            let day = sample_day(&pair, &plan, a.sim.grid_dt, a.sim.horizon, seed(cli), a.sim.day)?;
            fs::create_dir_all(out)?;
            for (s, tag) in day.series.iter().zip(["i", "j"]) {
                write_stepped_csv(fs::File::create(out.join(format!("stepped_{tag}.csv")))?, s)?;
                write_ticks_csv(fs::File::create(out.join(format!("ticks_{tag}.csv")))?, &s.tick_times)?;
            }
            Ok(())
        }
        Command::Theory(a) => theory(cli, a),
        Command::Estimate(a) => {
            let mut cfg: RunConfig = match &cli.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::from_toml(
                    &format!("[input]\nkind = \"ticks\"\npath = {:?}\n", a.ticks.display().to_string()),
                    Path::new("."),
                )?,
            };
            cfg.input = InputSpec::Ticks { path: a.ticks.clone(), assets: Some(a.assets.clone()), fail_fast: false };
            cfg.fits.clear();
            cfg.max_lag = a.max_lag;
            cfg.ensembles = None;
            cfg.validate()?;
            run_pipeline(&cfg, require_out(cli)?, exec(cli)).map(|_| ())
        }
        Command::Filter(a) => {
            let mut s = read_spectrum_csv(fs::File::open(&a.spectrum)?, a.n_days, a.grid_dt)?;
            s.rates = Some([a.lambda_i, a.lambda_j]);
            let snr = match a.snr.as_str() {
                "auto" => Snr::Auto,
                text => match text.parse::<f64>() {
                    Ok(v) => Snr::Scalar(v),
                    Err(_) => Snr::PerFrequency(read_numbers(Path::new(text))?),
                },
            };
            let mode = match a.mode {
                ModeArg::Inverse => FilterMode::Inverse,
                ModeArg::Wiener => FilterMode::Wiener,
            };
            let f = apply_filter(&s, a.lambda_i, a.lambda_j, &FilterSpec { mode, snr })?;
            write_spectrum_csv(sink(cli, "spectrum_filtered.csv")?, &f)?;
            if let Some(m) = a.max_lag {
                let cg = filtered_correlogram(&f, m, false)?;
                write_correlogram_csv(sink(cli, "correlogram_filtered.csv")?, &cg)?;
            }
            Ok(())
        }
        Command::Fit(a) => {
            let families = a.family.iter().map(|f| f.parse::<Family>()).collect::<Result<Vec<_>>>()?;
            let auto = families.iter().any(|f| f.is_auto());
            if auto && families.iter().any(|f| !f.is_auto()) {
                return Err(Error::InvalidArgument("cannot mix auto and cross families on one correlogram".into()));
            }
            let cg = read_correlogram_csv(fs::File::open(&a.correlogram)?, a.n_days, auto)?;
            let rows = families
                .iter()
                .map(|&f| Ok((a.i.clone(), a.j.clone(), fit(&cg, f, a.lambda_i, a.lambda_j, &FitOptions::default())?)))
                .collect::<Result<Vec<_>>>()?;
            write_fit_csv(sink(cli, "fits.csv")?, &rows)
        }
        Command::Run => {
            let path = cli.config.as_deref().ok_or_else(|| Error::InvalidArgument("--config <file> is required".into()))?;
            let mut cfg = RunConfig::load(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let m = run_pipeline(&cfg, require_out(cli)?, exec(cli))?;
            eprintln!("wrote {} files, {} skipped item(s)", m.files.len() + 1, m.skipped.len());
            Ok(())
        }
        Command::Figures(a) => figures(require_out(cli)?, seed(cli), a.days, exec(cli)).map(|_| ()),
    }
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .filter(|(i, l)| !(*i == 0 && l.trim().parse::<f64>().is_err()))
        .map(|(i, l)| l.trim().parse().map_err(|_| Error::Parse { line: i + 1, message: format!("not a number: `{l}`") }))
        .collect()
}

fn theory(cli: &Cli, a: &TheoryArgs) -> Result<()> {
    let pair = load_model(&a.model)?;
    let k = AsyncKernel::new(a.lambda_i, a.lambda_j)?;
    let lagged = matches!(a.quantity, Quantity::CrossCorr | Quantity::AutoCorr);
    let (from, to) = match lagged {
        true => (a.from.unwrap_or(-20.0), a.to.unwrap_or(20.0)),
        false => (a.from.unwrap_or(0.1), a.to.unwrap_or(100.0)),
    };
    if a.points < 2 || !(to > from) {
        return Err(Error::InvalidArgument("need --points >= 2 and --to > --from".into()));
    }
    let xs: Vec<f64> = (0..a.points).map(|n| from + (to - from) * n as f64 / (a.points - 1) as f64).collect();
    let mut w = csv::Writer::from_writer(sink(cli, "theory.csv")?);
    match a.quantity {
        Quantity::AutoCorr => {
            w.write_record(["tau", "value", "delta"])?;
            for &x in &xs {
                let (d, r) = async_autocorr(&pair.auto_i, a.lambda_i, x)?;
                w.write_record([x.to_string(), r.to_string(), d.to_string()])?;
            }
        }
        Quantity::CrossCorr => {
            w.write_record(["tau", "value", "delta"])?;
            let d = async_cross_delta(&pair.cross, &k);
            for &x in &xs {
                w.write_record([x.to_string(), async_cross_corr(&pair.cross, &k, x).to_string(), d.to_string()])?;
            }
        }
        q => {
            w.write_record([if lagged { "tau" } else { "dt" }, "value"])?;
            for &x in &xs {
                let v = match q {
                    Quantity::Rho => async_rho(&pair, &k, x)?,
                    Quantity::Covariance => async_covariance(&pair.cross, &k, x)?,
                    _ => async_variance(&pair.auto_i, a.lambda_i, x)?,
                };
                w.write_record([x.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
