use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use epps::estimation::{correlogram, epps_curve, estimate_spectrum};
use epps::kernels::{CorrelationModel, ModelPair};
use epps::sampling::{sample_day, SamplingPlan};
use epps::Exec;

const DAYS: usize = 16;
const HORIZON: f64 = 20_000.0;

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn pair() -> ModelPair {
    ModelPair::with_brownian_autos(CorrelationModel::exponential(0.5, 5.0, 0.0)).unwrap()
}

fn simulate(exec: Exec) -> Vec<epps::sampling::SampledDay> {
    let pair = pair();
    let plan = SamplingPlan::Poisson([1.0, 0.05]);
    exec.map(DAYS, |d| sample_day(&pair, &plan, 1.0, HORIZON, 1, d as u64).unwrap())
}

fn bench_simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_days");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(simulate(exec))));
    }
    g.finish();
}

fn bench_estimators(c: &mut Criterion) {
    let days = simulate(Exec::default());
    let incs: Vec<(Vec<f64>, Vec<f64>)> = days.iter().map(|d| (d.series[0].increments(), d.series[1].increments())).collect();
    let stepped: Vec<_> = days.iter().map(|d| (d.series[0].clone(), d.series[1].clone())).collect();
    let dts = [1.0, 2.0, 5.0, 10.0, 30.0, 60.0, 300.0];

    let mut g = c.benchmark_group("estimators");
    g.sample_size(20);
    for (name, exec) in modes() {
        g.bench_with_input(BenchmarkId::new("spectrum", name), &exec, |b, &e| {
            b.iter(|| estimate_spectrum(black_box(&incs), HORIZON as usize, 1.0, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("correlogram", name), &exec, |b, &e| {
            b.iter(|| correlogram(black_box(&incs), 1.0, 120, true, false, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("epps_curve", name), &exec, |b, &e| {
            b.iter(|| epps_curve(black_box(&stepped), &dts, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_simulation, bench_estimators);
criterion_main!(benches);
