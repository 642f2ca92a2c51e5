use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mqplab_core::{
    hill_plateau, optimize_gain, riccati_multizone, run_ensemble, swimmer_system, CssModel, FeedbackLaw,
    IntegratorConfig, MomentMethod, NoiseReading, Scheme, ThermalEdge, ThermalNetwork, ThermalZone,
};
use nalgebra::DMatrix;

fn ensemble(c: &mut Criterion) {
    let sys = swimmer_system(3, 1.0, 1.0).unwrap();
    let mut group = c.benchmark_group("ensemble_64x400_steps");
    for scheme in [Scheme::EulerMaruyama, Scheme::PredictorCorrector, Scheme::Exponential] {
        let mut cfg = IntegratorConfig::new(0.005, 2.0, 1);
        cfg.scheme = scheme;
        cfg.threads = Some(1);
        cfg.burn_in = 1.0;
        cfg.sample_interval = Some(0.1);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{scheme:?}")), &cfg, |b, cfg| {
            b.iter(|| run_ensemble(&sys, &FeedbackLaw::Radial { phi: 10.0 }, cfg, 64).unwrap())
        });
    }
    group.finish();
}

fn propagator(c: &mut Criterion) {
    let sys = swimmer_system(3, 1.0, 0.0).unwrap();
    let mut cfg = IntegratorConfig::new(0.005, 2.0, 2);
    cfg.threads = Some(1);
    cfg.lyapunov_times = vec![1.0, 2.0];
    c.bench_function("propagator_64x400_steps", |b| {
        b.iter(|| run_ensemble(&sys, &FeedbackLaw::none(), &cfg, 64).unwrap())
    });
}

fn hill(c: &mut Criterion) {
    // Exact Pareto quantiles with survival exponent 2.
    let n = 100_000;
    let samples: Vec<f64> = (0..n).map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-0.5)).collect();
    c.bench_function("hill_plateau_1e5", |b| b.iter(|| hill_plateau(black_box(&samples)).unwrap()));
}

fn control(c: &mut Criterion) {
    let zone = |c_bar_o: f64, c_s: f64| ThermalZone { c_bar_o, c_s, kappa: 0.6, d_o: 0.3, alpha: 1.0, beta: 2.0 };
    let net = ThermalNetwork {
        zones: vec![zone(1.0, 0.8), zone(1.4, 1.1), zone(0.9, 1.0)],
        edges: vec![
            ThermalEdge { i: 0, j: 1, c_bar: 0.5, d_coef: 0.1 },
            ThermalEdge { i: 1, j: 2, c_bar: 0.3, d_coef: 0.05 },
        ],
        t_o: 5.0,
        t_s: 35.0,
        t_bar: 20.0,
    };
    c.bench_function("riccati_multizone_3", |b| {
        b.iter(|| riccati_multizone(&net, NoiseReading::default(), 0.0, &DMatrix::zeros(3, 3), -10.0).unwrap())
    });
    let model = CssModel::Thermal { c0: 1.0, c1: 2.0, d_coef: 1.0, kappa: 1.0 };
    c.bench_function("optimize_gain_quadrature_q3", |b| {
        b.iter(|| optimize_gain(&model, black_box(3.0), 3.0, MomentMethod::Quadrature).unwrap())
    });
}

criterion_group!(benches, ensemble, propagator, hill, control);
criterion_main!(benches);
