//! Data-parallel paths against their sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ipot::data::{generate, Problem, ProblemSpec};
use ipot::encoding::FourierSpec;
use ipot::model::{Ipot, IpotConfig};
use ipot::parallel::ExecPolicy;
use ipot::training::{evaluate, sample_gradient};

const POLICIES: [(&str, ExecPolicy); 2] = [("parallel", ExecPolicy::Parallel), ("sequential", ExecPolicy::Sequential)];

fn small_model() -> Ipot {
    let cfg = IpotConfig {
        n_z: 64,
        d_z: 32,
        layers: 2,
        heads_enc: 1,
        heads_proc: 4,
        heads_dec: 1,
        encoding: FourierSpec::new(vec![8, 8], vec![16.0, 16.0]).unwrap(),
        d_in: 1,
        d_out: 1,
    };
    Ipot::init(cfg, 0).unwrap()
}

fn bench_policies(c: &mut Criterion) {
    let mut spec = ProblemSpec::new(Problem::Darcy, 16, 16, 0);
    spec.n_test = 8;
    let data = generate(&spec, ExecPolicy::Parallel).unwrap();
    let model = small_model();
    let batch: Vec<usize> = data.train_indices().into_iter().take(8).collect();
    let test = data.test_indices();

    let mut group = c.benchmark_group("policy");
    group.sample_size(10);
    for (name, policy) in POLICIES {
        group.bench_with_input(BenchmarkId::new("batch_gradient", name), &policy, |b, &p| {
            b.iter(|| p.map(&batch, |&i| sample_gradient(&model, &data.samples[i], data.frames).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("evaluate", name), &policy, |b, &p| {
            b.iter(|| evaluate(&model, &data, &test, p).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("generate_darcy", name), &policy, |b, &p| {
            b.iter(|| generate(&spec, p).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_policies);
criterion_main!(benches);
