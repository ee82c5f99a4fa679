use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use advscore::detect::{aggregate_with, PostprocessConfig};
use advscore::model::{ConditionGrid, Factor, SubjectId};
use advscore::sim::{simulate_detections, simulate_detections_with, CellParams, ScenarioSpec};
use advscore::stats::{bootstrap_ci_with, BootstrapConfig};
use advscore::Exec;

fn scenario(n_frames: u64) -> ScenarioSpec {
    let grid = ConditionGrid::new(vec![
        Factor::new("location", ["center", "right"]).unwrap(),
        Factor::new("bulb", ["Hlgn", "LED"]).unwrap(),
        Factor::new("distance", ["1in", "5in", "10in", "15in", "20in"]).unwrap(),
    ])
    .unwrap();
    ScenarioSpec::uniform(
        grid,
        vec![
            (SubjectId::baseline("none"), CellParams::detection(0.9, 0.1)),
            (SubjectId::adversary("a"), CellParams::detection(0.4, 0.2)),
            (SubjectId::adversary("b"), CellParams::detection(0.1, 0.0)),
        ],
        n_frames,
        7,
    )
    .unwrap()
}

const POLICIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn bootstrap(c: &mut Criterion) {
    let values: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
    let cfg = BootstrapConfig::default();
    let mut g = c.benchmark_group("bootstrap_10k");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bootstrap_ci_with(black_box(&values), &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let spec = scenario(2_000);
    let mut g = c.benchmark_group("simulate_detections");
    g.sample_size(20);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_detections_with(black_box(&spec), exec).unwrap())
        });
    }
    g.finish();
}

fn aggregate(c: &mut Criterion) {
    let frames = simulate_detections(&scenario(2_000)).unwrap();
    let cfg = PostprocessConfig::default();
    let mut g = c.benchmark_group("aggregate");
    g.sample_size(20);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| aggregate_with(black_box(&frames), "vase", &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bootstrap, simulate, aggregate);
criterion_main!(benches);
