use criterion::{criterion_group, criterion_main, Criterion};
use kashin_core::empirical::{self, SupConfig};
use kashin_core::metrics::{Ball, EpSpace, VectorSet};
use kashin_core::par::{with_execution, Execution};
use kashin_core::selection::{self, IsometryMode};
use kashin_core::systems::gen_walsh;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bernoulli(c: &mut Criterion) {
    let sys = gen_walsh(6).unwrap();
    let ball = Ball::ep(&sys, EpSpace::new(1.5, 1.0).unwrap());
    let xs = VectorSet::from_picks(&ball, &empirical::uniform_picks(64, 32, 1)).unwrap();
    let cfg = SupConfig::new(64, 4, 7);

    let mut group = c.benchmark_group("bernoulli_sup");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| with_execution(mode, || empirical::bernoulli_sup(&xs, &ball, &cfg, false).unwrap()))
        });
    }
    group.finish();
}

fn isometry(c: &mut Criterion) {
    let sys = gen_walsh(10).unwrap();
    let op = selection::sample_operator(&sys, 512, 1).unwrap();

    let mut group = c.benchmark_group("gamma_isometry_check");
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| with_execution(mode, || selection::gamma_isometry_check(&op, &sys, 2000, IsometryMode::Fresh, 3).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bernoulli, isometry);
criterion_main!(benches);
