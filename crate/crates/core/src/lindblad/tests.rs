use faer::{Mat, Side};
use proptest::prelude::*;

use super::*;
use crate::hilbert::tests::random_density;
use crate::hilbert::ZERO;

fn max_abs(m: &Mat<C64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

fn trace(m: &Mat<C64>) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

fn projector(n: usize, k: usize) -> Mat<C64> {
    Mat::from_fn(n, n, |i, j| if i == k && j == k { C64::new(1.0, 0.0) } else { ZERO })
}

fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let d = a.dim();
    let diff = Mat::from_fn(d, d, |i, j| a.get(i, j) - b.get(i, j));
    let ev = diff.self_adjoint_eigenvalues(Side::Lower).unwrap();
    0.5 * ev.iter().map(|x| x.abs()).sum::<f64>()
}

fn decay_model(n: usize, kappa: f64) -> LindbladModel {
    let params = SystemParams { k1: 0.0, k2: 0.0, ..SystemParams::default() };
    build_single(&params, n)
        .unwrap()
        .with_channel(kappa, FockOperator::annihilation(n).unwrap())
        .unwrap()
}

#[test]
fn dissipator_annihilates_vacuum() {
    let a = FockOperator::annihilation(4).unwrap();
    let out = dissipator_action(&a, &DensityMatrix::vacuum(4).unwrap()).unwrap();
    assert!(max_abs(&out) < 1e-15);
}

#[test]
fn dissipator_decays_single_photon() {
    let a = FockOperator::annihilation(4).unwrap();
    let out = dissipator_action(&a, &DensityMatrix::fock(4, 1).unwrap()).unwrap();
    let expected = Mat::from_fn(4, 4, |i, j| projector(4, 0)[(i, j)] - projector(4, 1)[(i, j)]);
    assert!(max_abs(&Mat::from_fn(4, 4, |i, j| out[(i, j)] - expected[(i, j)])) < 1e-15);
}

#[test]
fn dissipator_pumps_from_vacuum() {
    let ad = FockOperator::creation(3).unwrap();
    let out = dissipator_action(&ad, &DensityMatrix::vacuum(3).unwrap()).unwrap();
    let expected = Mat::from_fn(3, 3, |i, j| projector(3, 1)[(i, j)] - projector(3, 0)[(i, j)]);
    assert!(max_abs(&Mat::from_fn(3, 3, |i, j| out[(i, j)] - expected[(i, j)])) < 1e-15);
    assert!(trace(&out).norm() < 1e-10);
}

#[test]
fn dissipator_rejects_mismatched_space() {
    let a = FockOperator::annihilation(3).unwrap();
    let err = dissipator_action(&a, &DensityMatrix::vacuum(4).unwrap()).unwrap_err();
    assert_eq!(err.tag(), "invalid-space");
}

#[test]
fn single_model_has_pump_and_two_boson_loss() {
    let model = build_single(&SystemParams::default(), 20).unwrap();
    assert_eq!(model.space(), Space::Single(20));
    assert_eq!(model.channels().len(), 2);
    assert_eq!(model.channels()[0].rate, 1.0);
    assert_eq!(model.channels()[1].rate, 0.2);
    // a† raises, a² lowers by two.
    assert!((model.channels()[0].op.get(1, 0).re - 1.0).abs() < 1e-15);
    assert!((model.channels()[1].op.get(0, 2).re - 2f64.sqrt()).abs() < 1e-15);
    assert!((model.hamiltonian().get(3, 3).re - 6.0).abs() < 1e-15);
    assert!(build_single(&SystemParams::default(), 1).is_err());
}

#[test]
fn coupled_model_has_seven_channels_and_hermitian_hamiltonian() {
    let p = SystemParams::default().with_eps(3.5).with_gamma(0.2);
    let model = build_coupled(&p, 5).unwrap();
    assert_eq!(model.space(), Space::Composite(5, 5));
    let rates: Vec<f64> = model.channels().iter().map(|c| c.rate).collect();
    assert_eq!(rates, vec![1.0, 1.0, 0.2, 0.2, 0.2 * 3.5 / 2.0, 3.5 * 0.2, 3.5 * 0.2]);
    assert!(model.hamiltonian().hermiticity_error() < 1e-14);
    // The pair term couples |0,0> to |1,1> with amplitude i eps q / 4.
    let h = model.hamiltonian();
    let idx11 = 5 + 1;
    assert!((h.get(idx11, 0) - I * (3.5 * 0.2 / 4.0)).norm() < 1e-14);
    assert!((h.get(0, idx11) + I * (3.5 * 0.2 / 4.0)).norm() < 1e-14);
}

#[test]
fn decoupled_pair_is_two_single_copies() {
    let single = build_single(&SystemParams::default(), 4).unwrap();
    let coupled = build_coupled(&SystemParams::default().with_eps(0.0), 4).unwrap();
    let expected_h = &embed(single.hamiltonian(), Site::One, 4).unwrap()
        + &embed(single.hamiltonian(), Site::Two, 4).unwrap();
    let diff = &expected_h - coupled.hamiltonian();
    assert!(max_abs(diff.matrix()) < 1e-15);
    assert_eq!(coupled.active_channels().count(), 4);
}

#[test]
fn liouvillian_has_expected_shape() {
    let model = build_coupled(&SystemParams::default().with_eps(2.0), 3).unwrap();
    let l = liouvillian(&model);
    assert_eq!(l.dim(), 9);
    assert_eq!(l.size(), 81);
    assert!(l.nnz() > 81);
}

#[test]
fn exponential_decay_of_single_photon() {
    let kappa = 0.7;
    let model = decay_model(3, kappa);
    let opts = EvolveOptions::new(4.0, 1e-3).with_samples(8).with_tolerances(1e-11, 1e-13);
    let traj = evolve(&DensityMatrix::fock(3, 1).unwrap(), &model, &opts).unwrap();
    assert_eq!(traj.states.len(), 9);
    for (t, rho) in traj.times.iter().zip(&traj.states) {
        let p1 = rho.get(1, 1).re;
        assert!((p1 - (-kappa * t).exp()).abs() < 1e-6, "t={t} p1={p1}");
    }
}

#[test]
fn decoupled_evolution_stays_product() {
    let n = 4;
    let p = SystemParams::default().with_eps(0.0);
    let single = build_single(&p, n).unwrap();
    let coupled = build_coupled(&p, n).unwrap();
    let r1 = DensityMatrix::fock(n, 1).unwrap();
    let r2 = random_density(Space::Single(n), &[0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.7]);
    let rho0 = DensityMatrix::product(&r1, &r2).unwrap();
    let opts = EvolveOptions::new(2.0, 1e-3).with_tolerances(1e-10, 1e-12);
    let joint = evolve(&rho0, &coupled, &opts).unwrap();
    let s1 = evolve(&r1, &single, &opts).unwrap();
    let s2 = evolve(&r2, &single, &opts).unwrap();
    let red1 = reduced_state(joint.last(), Site::One).unwrap();
    let red2 = reduced_state(joint.last(), Site::Two).unwrap();
    assert!(trace_distance(&red1, s1.last()) < 1e-6);
    assert!(trace_distance(&red2, s2.last()) < 1e-6);
    let product = DensityMatrix::product(&red1, &red2).unwrap();
    assert!(trace_distance(&product, joint.last()) < 1e-6);
}

#[test]
fn evolve_reports_stiffness_failure() {
    let model = build_single(&SystemParams::default().with_k2(1e8), 6).unwrap();
    let mut opts = EvolveOptions::new(1.0, 1e-2);
    opts.dt_min = 1e-6;
    let err = evolve(&DensityMatrix::fock(6, 5).unwrap(), &model, &opts).unwrap_err();
    assert_eq!(err.tag(), "stiffness-failure");
}

#[test]
fn deep_limit_populations() {
    let p = SystemParams::default().with_k2(1000.0);
    let rho = steady_state(&build_single(&p, 8).unwrap()).unwrap();
    let pops = fock_populations(&rho, Site::One).unwrap();
    assert!((pops[0] - 2.0 / 3.0).abs() < 2e-3, "p0 = {}", pops[0]);
    assert!((pops[1] - 1.0 / 3.0).abs() < 2e-3, "p1 = {}", pops[1]);
}

#[test]
fn pure_decay_relaxes_to_vacuum() {
    let rho = steady_state(&decay_model(6, 1.0)).unwrap();
    let vac = DensityMatrix::vacuum(6).unwrap();
    assert!(trace_distance(&rho, &vac) < 1e-10);
}

#[test]
fn steady_state_matches_long_time_evolution() {
    let model = build_single(&SystemParams::default(), 20).unwrap();
    let report = steady_state_with(&model, &SteadyOptions::default()).unwrap();
    assert_eq!(report.method, SteadyMethod::Direct);
    assert!(report.residual < 1e-10);
    let (late, _) =
        evolve_to_steady(&DensityMatrix::vacuum(20).unwrap(), &model, 1e-10, 1e4).unwrap();
    let a = mean_phonon(&report.rho, Site::One).unwrap();
    let b = mean_phonon(&late, Site::One).unwrap();
    assert!((a - b).abs() < 1e-4, "steady {a} vs evolved {b}");
    assert!(report.rho.min_eigenvalue().unwrap() > -1e-8);
}

#[test]
fn weak_single_oscillator_is_near_classical_amplitude() {
    let rho = steady_state(&build_single(&SystemParams::default(), 20).unwrap()).unwrap();
    let n = mean_phonon(&rho, Site::One).unwrap();
    assert!((n / 2.5 - 1.0).abs() < 0.25, "<n> = {n}");
}

#[test]
fn all_three_routes_agree_on_small_pair() {
    let p = SystemParams::default().with_eps(3.5).with_gamma(0.4);
    let model = build_coupled(&p, 5).unwrap();
    let solve = |method| {
        let opts = SteadyOptions { method, ..SteadyOptions::default() };
        steady_state_with(&model, &opts).unwrap()
    };
    let direct = solve(SteadyMethod::Direct);
    let krylov = solve(SteadyMethod::Krylov);
    let evolved = solve(SteadyMethod::Evolve);
    assert_eq!(krylov.method, SteadyMethod::Krylov);
    assert!(krylov.iterations > 0);
    assert!(trace_distance(&direct.rho, &krylov.rho) < 1e-9);
    assert!(trace_distance(&direct.rho, &evolved.rho) < 1e-6);
    for r in [&direct, &krylov] {
        assert!(r.residual < 1e-10);
        assert!(r.rho.min_eigenvalue().unwrap() > -1e-8);
        assert!((r.rho.trace().re - 1.0).abs() < 1e-12);
    }
}

#[test]
fn budget_rejects_direct_and_auto_falls_back() {
    let model = build_single(&SystemParams::default(), 12).unwrap();
    let tight = SteadyOptions {
        method: SteadyMethod::Direct,
        memory_budget_bytes: 128 << 10,
        ..SteadyOptions::default()
    };
    assert_eq!(steady_state_with(&model, &tight).unwrap_err().tag(), "resource-budget");
    let auto = SteadyOptions { method: SteadyMethod::Auto, ..tight };
    let report = steady_state_with(&model, &auto).unwrap();
    assert_eq!(report.method, SteadyMethod::Evolve);
    let direct = steady_state(&model).unwrap();
    assert!(trace_distance(&direct, &report.rho) < 1e-6);
    let nothing = SteadyOptions { memory_budget_bytes: 16, ..auto };
    assert_eq!(steady_state_with(&model, &nothing).unwrap_err().tag(), "resource-budget");
}

#[test]
fn closed_system_is_degenerate() {
    let h = FockOperator::number(4).unwrap();
    let model = LindbladModel::new(h, Vec::new()).unwrap();
    assert_eq!(steady_state(&model).unwrap_err().tag(), "degenerate-steady-state");
}

#[test]
fn pure_dephasing_is_degenerate() {
    let model = LindbladModel::new(FockOperator::number(4).unwrap(), Vec::new())
        .unwrap()
        .with_channel(0.5, FockOperator::number(4).unwrap())
        .unwrap();
    assert_eq!(steady_state(&model).unwrap_err().tag(), "degenerate-steady-state");
}

#[test]
fn model_rejects_bad_inputs() {
    let n = FockOperator::annihilation(3).unwrap();
    assert!(LindbladModel::new(n.clone(), Vec::new()).is_err());
    let h = FockOperator::number(3).unwrap();
    let m = LindbladModel::new(h, Vec::new()).unwrap();
    assert!(m.clone().with_channel(-1.0, n.clone()).is_err());
    assert!(m.with_channel(1.0, FockOperator::annihilation(4).unwrap()).is_err());
}

#[test]
fn observables_of_simple_states() {
    let vac = DensityMatrix::vacuum(5).unwrap();
    assert_eq!(mean_phonon(&vac, Site::One).unwrap(), 0.0);
    assert_eq!(fock_populations(&vac, Site::One).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    let mix = DensityMatrix::diagonal(&[2.0 / 3.0, 1.0 / 3.0, 0.0]).unwrap();
    assert!((mean_phonon(&mix, Site::One).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(mean_phonon(&mix, Site::Two).is_err());
    let pair = DensityMatrix::product(&mix, &vac).unwrap();
    assert!((mean_phonon(&pair, Site::One).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    assert!(mean_phonon(&pair, Site::Two).unwrap().abs() < 1e-14);
    let pops = fock_populations(&pair, Site::Two).unwrap();
    assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-8);
}

fn params_strategy() -> impl Strategy<Value = SystemParams> {
    (0.5f64..3.0, 0.1f64..2.0, 0.05f64..3.0, 0.0f64..10.0, 0.0f64..=1.0, 0.05f64..=1.0).prop_map(
        |(omega, k1, k2, eps, q, gamma)| SystemParams { omega, k1, k2, eps, q, gamma },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn liouvillian_matches_direct_rhs(
        p in params_strategy(),
        entries in proptest::collection::vec(-1.0f64..1.0, 16..80),
        composite in any::<bool>(),
    ) {
        let (model, space) = if composite {
            (build_coupled(&p, 3).unwrap(), Space::Composite(3, 3))
        } else {
            (build_single(&p, 6).unwrap(), Space::Single(6))
        };
        let rho = random_density(space, &entries);
        let direct = model.rhs(rho.matrix()).unwrap();
        let via_l = liouvillian(&model).apply_matrix(rho.matrix()).unwrap();
        let d = space.dim();
        let err = max_abs(&Mat::from_fn(d, d, |i, j| direct[(i, j)] - via_l[(i, j)]));
        let scale = 1.0 + max_abs(&direct);
        prop_assert!(err < 1e-12 * scale, "mismatch {err}");
    }

    #[test]
    fn flow_preserves_trace_and_hermiticity(
        p in params_strategy(),
        entries in proptest::collection::vec(-1.0f64..1.0, 16..80),
    ) {
        let model = build_coupled(&p, 3).unwrap();
        let rho = random_density(Space::Composite(3, 3), &entries);
        let out = model.rhs(rho.matrix()).unwrap();
        prop_assert!(trace(&out).norm() < 1e-10);
        let d = out.nrows();
        let herm = max_abs(&Mat::from_fn(d, d, |i, j| out[(i, j)] - out[(j, i)].conj()));
        prop_assert!(herm < 1e-10);
        let via_l = liouvillian(&model).apply_matrix(rho.matrix()).unwrap();
        prop_assert!(trace(&via_l).norm() < 1e-8);
    }

    #[test]
    fn steady_states_are_valid(p in params_strategy()) {
        let model = build_coupled(&p, 3).unwrap();
        let report = steady_state_with(&model, &SteadyOptions::default()).unwrap();
        prop_assert!(report.residual < 1e-10);
        prop_assert!(report.rho.min_eigenvalue().unwrap() > -1e-8);
        prop_assert!(report.rho.hermiticity_error() < 1e-10);
    }
}
