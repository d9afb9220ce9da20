use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gmc_core::data::{synth_instance, SynthConfig};
use gmc_core::eval::{cross_validate, EvalConfig, Method};
use gmc_core::gradcheck::{run_gradcheck, GradcheckConfig};
use gmc_core::par::Execution;
use gmc_core::srgcnn::TrainConfig;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn cross_validation(c: &mut Criterion) {
    let inst = synth_instance(&SynthConfig {
        m: 60,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut group = c.benchmark_group("cross_validate");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = EvalConfig {
            folds: 4,
            train: TrainConfig {
                epochs: 40,
                ..TrainConfig::desk()
            },
            methods: vec![Method::GmcSimilarity, Method::LogReg],
            execution,
            ..EvalConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| cross_validate(&inst.raw, None, cfg, 0).unwrap())
        });
    }
    group.finish();
}

fn gradient_check(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradcheck");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = GradcheckConfig {
            trials: 10,
            model_trials: 1,
            execution,
            ..GradcheckConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_gradcheck(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, cross_validation, gradient_check);
criterion_main!(benches);
