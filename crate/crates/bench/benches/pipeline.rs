use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use rpcf::features::{extract_patch, FeatureExtractor};
use rpcf::solver::{admm_solve, build_rhs, cg_solve, LinearOperator, NormalSystem, WarmStart};
use rpcf::spectral::{forward, inverse};
use rpcf::tracker::TrackerConfig;
use rpcf_bench::{grid, penalties, sequence, solver_problem, spectra, tracker, CHANNELS};

fn spectral(c: &mut Criterion) {
    let g = grid();
    let s = forward(&g).unwrap();
    c.bench_function("fft/forward 50x50", |b| {
        b.iter(|| forward(black_box(&g)).unwrap())
    });
    c.bench_function("fft/inverse 50x50", |b| {
        b.iter(|| inverse(black_box(&s)).unwrap())
    });
}

fn solver(c: &mut Criterion) {
    let rp = solver_problem();
    let gamma = penalties();
    let op = NormalSystem::new(&rp.memory, &rp.problem, 0.01, &gamma).unwrap();
    let u = spectra(CHANNELS);
    c.bench_function("operator/apply 13x50x50, 6 samples", |b| {
        b.iter(|| op.apply(black_box(&u)).unwrap())
    });

    let xi = vec![vec![0.0; rp.problem.pairs.len()]; CHANNELS];
    let rhs = build_rhs(
        &rp.memory,
        &rp.problem.mask,
        &rp.problem.pairs,
        &xi,
        &rp.problem.label_hat,
    )
    .unwrap();
    c.bench_function("cg/20 iterations", |b| {
        b.iter(|| cg_solve(&op, black_box(&rhs), None, None, 20, 0.0).unwrap())
    });

    let config = TrackerConfig::default().solver;
    let mut group = c.benchmark_group("admm");
    group.sample_size(10);
    group.bench_function("update schedule", |b| {
        b.iter(|| {
            admm_solve(
                &rp.memory,
                &rp.problem,
                &config,
                &config.update_schedule(),
                WarmStart::default(),
            )
            .unwrap()
        })
    });
    group.finish();
}

fn features(c: &mut Criterion) {
    let seq = sequence(1);
    let center = seq.boxes[0].center();
    let extractor = FeatureExtractor::new(TrackerConfig::default().features).unwrap();
    let patch = extract_patch(&seq.frames[0], center, (200.0, 200.0), 1.0, (200, 200)).unwrap();
    let raw = extractor.raw_features(&patch).unwrap();
    let projection = extractor.fit_projection(&raw).unwrap();
    c.bench_function("features/patch 200x200", |b| {
        b.iter(|| extract_patch(&seq.frames[0], center, (200.0, 200.0), 1.02, (200, 200)).unwrap())
    });
    c.bench_function("features/raw 200x200", |b| {
        b.iter(|| extractor.raw_features(black_box(&patch)).unwrap())
    });
    c.bench_function("features/project and window", |b| {
        b.iter(|| extractor.finish(black_box(&raw), &projection).unwrap())
    });
}

fn tracking(c: &mut Criterion) {
    let seq = sequence(8);
    let mut group = c.benchmark_group("tracker");
    group.sample_size(10);
    group.bench_function("init", |b| b.iter(|| tracker(black_box(&seq))));
    // Frames 1..=5 contain no model update; frame 6 does.
    group.bench_function("step without update", |b| {
        b.iter_batched(
            || tracker(&seq),
            |mut t| t.step(&seq.frames[1]).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("five steps and one update", |b| {
        b.iter_batched(
            || tracker(&seq),
            |mut t| {
                for f in &seq.frames[1..7] {
                    t.step(f).unwrap();
                }
                t
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, spectral, solver, features, tracking);
criterion_main!(benches);
