use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvg_attack::convexity::{analyze, DEFAULT_STEP};
use mvg_attack::greybox::{average_components, Prior};
use mvg_attack::models::{lgssm_observations, lgssm_unroll, LgssmPrior, LgssmSpec};
use mvg_attack::solvers::{solve_white_box, white_box_problem};
use mvg_attack::{BoxRegion, SeededStream, SolveConfig};

fn lgssm(horizon: usize) -> (mvg_attack::GaussianJoint, mvg_attack::Vector, BoxRegion) {
    let spec = LgssmSpec {
        horizon,
        ..LgssmSpec::default()
    };
    let joint = lgssm_unroll(&spec).unwrap();
    let z = lgssm_observations(horizon).unwrap();
    let region = BoxRegion::relative(&z, 0.25).unwrap();
    (joint, z, region)
}

fn white_box(c: &mut Criterion) {
    let mut group = c.benchmark_group("white_box");
    group.sample_size(10);
    let cfg = SolveConfig::default();
    for horizon in [2, 5, 10] {
        let (joint, z, region) = lgssm(horizon);
        group.bench_with_input(BenchmarkId::new("lgssm", horizon), &horizon, |b, _| {
            b.iter(|| {
                let p = white_box_problem(&joint, &z, 0.5, &region, &cfg).unwrap();
                black_box(solve_white_box(&p, &cfg).unwrap())
            })
        });
    }
    group.finish();
}

fn convexity(c: &mut Criterion) {
    let (joint, z, region) = lgssm(10);
    let cfg = SolveConfig::default();
    let p = white_box_problem(&joint, &z, 0.5, &region, &cfg).unwrap();
    c.bench_function("convexity/lgssm10", |b| b.iter(|| black_box(analyze(&p, Some(DEFAULT_STEP)).unwrap())));
}

fn sample_average(c: &mut Criterion) {
    let (_, z, _) = lgssm(10);
    let prior = Prior::Lgssm(LgssmPrior::default());
    let mut group = c.benchmark_group("saa_components");
    group.sample_size(10);
    for j in [100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(j), &j, |b, &j| {
            b.iter(|| black_box(average_components(&prior, &z, j, SeededStream::new(7)).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, white_box, convexity, sample_average);
criterion_main!(benches);
