use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rpi_core::engine::simulate;
use rpi_core::instances::{iid_uniform, random_discrete};
use rpi_core::paired_oracle::{sweep, VerifyOptions};
use rpi_core::{ArrivalOrder, ExecMode, InfoModel, PolicySpec, SimConfig};

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let cases = [
        (
            "uniform50_quantile",
            iid_uniform(50, 1).unwrap(),
            PolicySpec::Quantile(0.0343),
        ),
        (
            "random8_msa_rand",
            random_discrete(3, 8, 2).unwrap(),
            PolicySpec::MsaRand,
        ),
    ];
    for (name, inst, policy) in &cases {
        let cfg = SimConfig {
            policy: policy.clone(),
            model: InfoModel::Ni,
            order: ArrivalOrder::IndexOrder,
            trials: 200_000,
            seed: 1,
        };
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(*name, format!("{mode:?}")),
                &mode,
                |b, &mode| b.iter(|| black_box(simulate(inst, &cfg, mode).unwrap())),
            );
        }
    }
    group.finish();
}

fn lemma_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("lemma_sweep_n5_k2");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_function(format!("{mode:?}"), |b| {
            b.iter(|| black_box(sweep(5, 2, &VerifyOptions::default(), mode).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, lemma_sweep);
criterion_main!(benches);
