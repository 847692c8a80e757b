use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use wignerlab::dbm::{evolve_additive, DbmConfig, DbmVariant};
use wignerlab::emf::{emf_generator, ConfigCodec, EmfState};
use wignerlab::ensembles::{sample_real, EnsembleSpec};
use wignerlab::levelrep::gue_expected_count;
use wignerlab::linalg::{eigh, eigvalsh};
use wignerlab::regularization::{HsRegularizer, RegParams};
use wignerlab::semicircle::{m_sc, HalfPlanePoint};

fn bench_sampling(c: &mut Criterion) {
    let spec = EnsembleSpec::goe(256, 7);
    c.bench_function("sample_goe_256", |b| {
        let mut stream = 0u64;
        b.iter(|| {
            stream += 1;
            sample_real(&spec, stream).unwrap()
        })
    });
}

fn bench_eigh(c: &mut Criterion) {
    let spec = EnsembleSpec::goe(256, 3);
    let m = sample_real(&spec, 0).unwrap();
    c.bench_function("eigh_256", |b| b.iter(|| eigh(&m).unwrap()));
    c.bench_function("eigvalsh_256", |b| b.iter(|| eigvalsh(&m).unwrap()));
}

fn bench_msc(c: &mut Criterion) {
    c.bench_function("m_sc_grid", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..100 {
                let z = HalfPlanePoint::new(-2.5 + 0.05 * i as f64, 1e-3);
                acc += m_sc(z).im;
            }
            acc
        })
    });
}

fn bench_kernel(c: &mut Criterion) {
    c.bench_function("gue_expected_count_50", |b| {
        b.iter(|| gue_expected_count(50, -0.2, 0.2).unwrap())
    });
}

fn bench_emf(c: &mut Criterion) {
    let codec = ConfigCodec::new(30, 2).unwrap();
    let lambda: Vec<f64> = (0..30).map(|i| -2.0 + 4.0 * i as f64 / 29.0).collect();
    let f: Vec<f64> = (0..codec.len()).map(|r| (r as f64 * 0.37).sin()).collect();
    let state = EmfState::new(codec, f);
    c.bench_function("emf_generator_30x2", |b| {
        b.iter(|| emf_generator(&state, &lambda).unwrap())
    });
}

fn bench_dbm(c: &mut Criterion) {
    let spec = EnsembleSpec::goe(64, 11);
    let h0 = sample_real(&spec, 0).unwrap();
    let cfg = DbmConfig::new(0.1, 10, DbmVariant::Additive);
    c.bench_function("dbm_additive_64x10", |b| {
        let mut stream = 0;
        b.iter(|| {
            stream += 1;
            evolve_additive(&h0, &cfg, 5, stream)
        })
    });
}

fn bench_lambda_tilde(c: &mut Criterion) {
    let n = 100;
    let spec = EnsembleSpec::goe(n, 17);
    let params = RegParams { eps1: 0.02, ..RegParams::from_delta1(0.1, n) };
    let hs = HsRegularizer::new(n, params).unwrap();
    let lam = eigvalsh(&sample_real(&spec, 0).unwrap()).unwrap();
    c.bench_function("lambda_tilde_100_bulk", |b| {
        b.iter_batched(
            || lam.clone(),
            |l| hs.lambda_tilde(&l, 50),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_sampling,
    bench_eigh,
    bench_msc,
    bench_kernel,
    bench_emf,
    bench_dbm,
    bench_lambda_tilde
);
criterion_main!(benches);
