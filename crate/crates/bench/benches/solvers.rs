use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qvdp_core::stochastic::{ensemble_run, EnsembleOptions};
use qvdp_core::sweep::quantum_point;
use qvdp_core::wigner::wigner;
use qvdp_core::{build_coupled, liouvillian, steady_state, DensityMatrix, SystemParams, WignerGridSpec};

fn weak_pair() -> SystemParams {
    SystemParams::weak_regime().with_eps_over_k1(3.5).with_q(0.2).with_gamma(0.2)
}

fn liouvillian_build(c: &mut Criterion) {
    let model = build_coupled(&weak_pair(), 10).unwrap();
    c.bench_function("liouvillian N=10 per site", |b| b.iter(|| liouvillian(black_box(&model))));
}

fn steady_states(c: &mut Criterion) {
    let mut g = c.benchmark_group("steady state");
    g.sample_size(10);
    for n in [6, 10] {
        let model = build_coupled(&weak_pair(), n).unwrap();
        g.bench_function(format!("coupled N={n} per site"), |b| b.iter(|| steady_state(black_box(&model)).unwrap()));
    }
    g.finish();
}

fn wigner_grid(c: &mut Criterion) {
    let (_, rho1) = quantum_point(&weak_pair(), &Default::default()).unwrap();
    let spec = WignerGridSpec::weak_default();
    let mut g = c.benchmark_group("wigner");
    g.sample_size(10);
    g.bench_function("N=20 on 301x301", |b| b.iter(|| wigner(black_box(&rho1), &spec).unwrap()));
    let vac = DensityMatrix::vacuum(20).unwrap();
    g.bench_function("vacuum N=20 on 301x301", |b| b.iter(|| wigner(black_box(&vac), &spec).unwrap()));
    g.finish();
}

fn em_ensemble(c: &mut Criterion) {
    let opts = EnsembleOptions { n_realizations: 32, t_final: 10.0, ..Default::default() };
    let mut g = c.benchmark_group("noisy ensemble");
    g.sample_size(10);
    g.bench_function("32 paths x 1e4 steps", |b| b.iter(|| ensemble_run(black_box(&weak_pair()), &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, liouvillian_build, steady_states, wigner_grid, em_ensemble);
criterion_main!(benches);
