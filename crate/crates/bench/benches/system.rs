use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ftgp_core::pdm::{build_pdm_model, bundled_wtm, PdmConfig};
use ftgp_core::random;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn adjoint(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_state_adjoint");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [4, 8, 16] {
        let model = random::model(&mut rng, n, 5, 3);
        let z = vec![0.0; model.registry().len()];
        let x0 = vec![1.0; n];
        let weights: Vec<(usize, Vec<f64>)> = (1..=5).map(|k| (k, vec![1.0; n])).collect();
        group.bench_with_input(BenchmarkId::new("random", n), &n, |b, _| {
            b.iter(|| model.log_state_adjoint(black_box(&z), &x0, &weights).unwrap())
        });
    }
    let cfg = PdmConfig::default();
    let model = build_pdm_model(&bundled_wtm(), &cfg).unwrap();
    let z = vec![-0.5; model.registry().len()];
    let x0 = cfg.initial_state();
    let weights: Vec<(usize, Vec<f64>)> = (1..=model.horizon()).map(|k| (k, vec![1.0; model.n()])).collect();
    group.bench_function("case_study_model", |b| {
        b.iter(|| model.log_state_adjoint(black_box(&z), &x0, &weights).unwrap())
    });
    group.finish();
}

fn propagation(c: &mut Criterion) {
    let cfg = PdmConfig::default();
    let model = build_pdm_model(&bundled_wtm(), &cfg).unwrap();
    let theta = vec![0.5; model.registry().len()];
    let x0 = cfg.initial_state();
    c.bench_function("propagate_numeric/case_study_model", |b| {
        b.iter(|| model.propagate_numeric(black_box(&theta), &x0).unwrap())
    });
}

criterion_group!(benches, adjoint, propagation);
criterion_main!(benches);
