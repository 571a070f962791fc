use std::hint::black_box;

use costeff_core::data::{generate_synthetic_trial, MissingnessMechanism, SyntheticTrialConfig};
use costeff_core::econ::{ceac, WtpGrid};
use costeff_core::inference::{ess, hpd_interval};
use costeff_core::{fit, Family, ModelSpec, SamplerConfig, TimeGrid, TrialDataset};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn trial(n: usize) -> TrialDataset {
    let mut cfg = SyntheticTrialConfig::example(1);
    for a in cfg.arms.iter_mut() {
        a.n = n;
        a.whole_record = true;
        a.missingness = MissingnessMechanism::Mcar { rate: 0.3 };
    }
    generate_synthetic_trial(&cfg).unwrap()
}

fn sampler(c: &mut Criterion) {
    let data = trial(200);
    let grid = TimeGrid::quarterly_year();
    let config = SamplerConfig {
        n_chains: 1,
        store_imputations: false,
        ..SamplerConfig::short(2000, 1000, 1)
    };
    let mut group = c.benchmark_group("fit_2000_iters_n200");
    group.sample_size(10);
    for family in Family::ALL {
        let spec = ModelSpec::new(family);
        group.bench_with_input(BenchmarkId::from_parameter(family), &spec, |b, spec| {
            b.iter(|| fit(black_box(&data), &grid, spec, &config).unwrap())
        });
    }
    group.finish();
}

fn post_processing(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let de: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>() - 0.45).collect();
    let dc: Vec<f64> = (0..100_000)
        .map(|_| 400.0 * rng.random::<f64>() - 150.0)
        .collect();
    let wtp = WtpGrid::default();
    c.bench_function("ceac_1e5_draws_301_k", |b| {
        b.iter(|| ceac(black_box(&de), black_box(&dc), &wtp).unwrap())
    });
    c.bench_function("ess_1e5", |b| b.iter(|| ess(black_box(&de)).unwrap()));
    c.bench_function("hpd_1e5", |b| {
        b.iter(|| hpd_interval(black_box(&dc), 0.9).unwrap())
    });
}

criterion_group!(benches, sampler, post_processing);
criterion_main!(benches);
