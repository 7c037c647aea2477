use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spikelab::checks::{outliers, RunSettings};
use spikelab::ensemble::EnsembleConfig;
use spikelab::exec::Execution;

fn outlier_trials(c: &mut Criterion) {
    let ens = EnsembleConfig::new(200, 400).with_spikes(&[3.0, 1.5]).build().unwrap();
    let params = outliers::OutlierLocationParams::default();
    let mut group = c.benchmark_group("outlier_locations_32_trials");
    group.sample_size(10);
    let modes = [
        ("serial", Execution::Serial),
        ("parallel", Execution::Parallel { threads: None }),
    ];
    for (label, exec) in modes {
        let run = RunSettings::new(32, 1).with_execution(exec);
        group.bench_with_input(BenchmarkId::from_parameter(label), &run, |b, run| {
            b.iter(|| outliers::outlier_locations(&ens, &params, run).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, outlier_trials);
criterion_main!(benches);
