use modfun_core::lti::{AdjointReachability, Propagator};
use modfun_core::{adjoint_null_control, observability_gramian, simulate, LtiSystem, SampledSignal};
use modfun_core::engine::estimate_series;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> LtiSystem {
    let a = random_matrix(rng, n, n) - DMatrix::identity(n, n) * 0.5;
    LtiSystem::new(
        a,
        random_matrix(rng, n, m),
        random_matrix(rng, p, n),
        random_matrix(rng, p, m),
    )
    .unwrap()
}

fn smooth_input(rng: &mut ChaCha8Rng, m: usize, dt: f64, len: usize) -> SampledSignal {
    let w: Vec<(f64, f64, f64)> = (0..2 * m)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..4.0), rng.gen_range(0.0..6.3)))
        .collect();
    SampledSignal::from_fn(0.0, dt, m, len, |t, o| {
        for (i, v) in o.iter_mut().enumerate() {
            *v = w[2 * i..2 * i + 2].iter().map(|(a, f, p)| a * (f * t + p).sin()).sum();
        }
    })
    .unwrap()
}

fn interp(u: &SampledSignal, t: f64) -> DVector<f64> {
    let x = t / u.dt();
    let k = (x.floor() as usize).min(u.len() - 2);
    let f = x - k as f64;
    DVector::from_column_slice(u.sample(k)) * (1.0 - f) + DVector::from_column_slice(u.sample(k + 1)) * f
}

#[test]
fn simulation_matches_a_fine_runge_kutta_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sys = random_system(&mut rng, 4, 2, 2);
    let dt = 0.01;
    let u = smooth_input(&mut rng, 2, dt, 201);
    let x0 = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
    let traj = simulate(&sys, &x0, &u).unwrap();

    let f = |t: f64, x: &DVector<f64>| sys.a() * x + sys.b() * interp(&u, t);
    let h = dt / 100.0;
    let mut x = x0.clone();
    for k in 0..200 {
        for i in 0..100 {
            let t = k as f64 * dt + i as f64 * h;
            let k1 = f(t, &x);
            let k2 = f(t + h / 2.0, &(&x + &k1 * (h / 2.0)));
            let k3 = f(t + h / 2.0, &(&x + &k2 * (h / 2.0)));
            let k4 = f(t + h, &(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let got = traj.state(k + 1);
        assert!((&got - &x).norm() <= 1e-8 * x.norm().max(1.0), "step {}", k + 1);
    }
    // y = Cx + Du sample by sample
    let y = sys.c() * traj.state(200) + sys.d() * DVector::from_column_slice(u.sample(200));
    assert!((DVector::from_column_slice(traj.outputs.sample(200)) - y).norm() < 1e-13);
}

#[test]
fn gramian_matches_trapezoidal_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sys = random_system(&mut rng, 2, 1, 1);
    let (horizon, dt) = (1.5, 1e-4);
    let w = observability_gramian(&sys, horizon).unwrap();
    let e = (sys.a() * dt).exp();
    let steps = (horizon / dt).round() as usize;
    let ctc = sys.c().transpose() * sys.c();
    let mut phi = DMatrix::identity(2, 2);
    let mut q = DMatrix::zeros(2, 2);
    for k in 0..=steps {
        let wk = if k == 0 || k == steps { 0.5 } else { 1.0 };
        q += phi.transpose() * &ctc * &phi * (wk * dt);
        phi = &e * phi;
    }
    assert!((&w - &q).norm() <= 1e-6 * w.norm());
}

#[test]
fn random_null_controls_reach_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let sys = random_system(&mut rng, 3, 1, 1);
        let phi0 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let pair = adjoint_null_control(&sys, &phi0, 2.0, 1e-3).unwrap();
        let eta = pair.eta.density().unwrap();
        let traj = simulate(&sys.adjoint(), &phi0, eta).unwrap();
        let end = traj.state(eta.len() - 1);
        assert!(end.norm() <= 1e-8 * phi0.norm(), "residual {}", end.norm());
        assert!(pair.residual <= 1e-8 * phi0.norm());
        // mu is the adjoint output of the same run
        let mu = pair.mu.density().unwrap();
        for k in (0..eta.len()).step_by(97) {
            assert!((mu.sample(k)[0] - traj.outputs.sample(k)[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn null_control_is_minimal_on_the_kernel_of_the_reachability_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sys = random_system(&mut rng, 3, 1, 1);
    let (horizon, dt) = (2.0, 0.1);
    let phi0 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
    let pair = adjoint_null_control(&sys, &phi0, horizon, dt).unwrap();
    let eta = pair.eta.density().unwrap().clone();
    let adj = sys.adjoint();
    let reach = AdjointReachability::new(&adj.propagator(dt), 20);
    let r = DMatrix::from_fn(3, 21, |i, k| reach.blocks[k][(i, 0)]);
    let svd = r.clone().svd(false, true);
    let v_t = svd.v_t.unwrap();
    // kernel directions: random vectors with their row-space part removed
    let row_space = v_t.rows(0, 3).transpose();
    let base = eta.l2_norm();
    for _ in 0..20 {
        let z = DVector::from_fn(21, |_, _| rng.gen_range(-1.0..1.0));
        let delta = &z - &row_space * (row_space.transpose() * &z);
        assert!((&r * &delta).norm() < 1e-10 * delta.norm());
        let scale = rng.gen_range(1e-3..1.0);
        let data: Vec<f64> = (0..21).map(|k| eta.sample(k)[0] + scale * delta[k]).collect();
        let perturbed = SampledSignal::new(0.0, dt, 1, data).unwrap();
        let end = simulate(&adj, &phi0, &perturbed).unwrap().state(20);
        assert!(end.norm() <= 1e-8 * phi0.norm());
        assert!(perturbed.l2_norm() >= base - 1e-12);
    }
}

#[test]
fn moving_horizon_identity_holds_for_every_t_after_the_horizon() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dt = 2e-3;
    for _ in 0..3 {
        let sys = random_system(&mut rng, 3, 2, 2);
        let x0 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let u = smooth_input(&mut rng, 2, dt, 1501);
        let traj = simulate(&sys, &x0, &u).unwrap();
        let phi0 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let pair = adjoint_null_control(&sys, &phi0, 1.0, dt).unwrap();
        let est = estimate_series(&pair, &u, &traj.outputs).unwrap();
        assert_eq!(est.len(), 1001);
        for k in 0..est.len() {
            let truth = phi0.dot(&traj.state(k + 500));
            assert!((est.sample(k)[0] - truth).abs() <= 10.0 * dt * dt + 1e-8, "t = {}", est.time(k));
        }
    }
}

#[test]
fn extended_output_is_the_functional_of_the_trajectory() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sys = random_system(&mut rng, 4, 2, 1);
    let k: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let l: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ext = sys.extend_with_functional(&k, &l).unwrap();
    assert_eq!(ext.p(), 2);
    let u = smooth_input(&mut rng, 2, 0.01, 300);
    let x0 = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
    let traj = simulate(&ext, &x0, &u).unwrap();
    for s in 0..300 {
        let x = traj.state(s);
        let want: f64 = (0..4).map(|i| k[i] * x[i]).sum::<f64>() + (0..2).map(|i| l[i] * u.sample(s)[i]).sum::<f64>();
        assert!((traj.outputs.sample(s)[1] - want).abs() <= 1e-13 * (1.0 + want.abs()));
    }
    let zero = sys.extend_with_functional(&[0.0; 4], &[0.0; 2]).unwrap();
    let t0 = simulate(&zero, &x0, &u).unwrap();
    assert!((0..300).all(|s| t0.outputs.sample(s)[1] == 0.0));
}

fn matrices(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-2.0..2.0f64, n * n),
            prop::collection::vec(-2.0..2.0f64, 2 * n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagator_is_a_semigroup((n, a, b) in matrices(5), dt1 in 1e-3..0.5f64, dt2 in 1e-3..0.5f64) {
        let a = DMatrix::from_row_slice(n, n, &a);
        let b = DMatrix::from_row_slice(n, 2, &b);
        let e = |dt: f64| Propagator::new(&a, &b, dt).e;
        let lhs = e(dt1 + dt2);
        let rhs = e(dt1) * e(dt2);
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn gramian_is_symmetric_psd((n, a, c) in matrices(5), horizon in 0.1..3.0f64) {
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(n, n, &a),
            DMatrix::zeros(n, 1),
            DMatrix::from_row_slice(2, n, &c),
            DMatrix::zeros(2, 1),
        ).unwrap();
        let w = observability_gramian(&sys, horizon).unwrap();
        let norm = w.norm();
        prop_assert!((&w - w.transpose()).norm() <= 1e-12 * norm.max(f64::MIN_POSITIVE));
        let ev = SymmetricEigen::new((&w + w.transpose()) * 0.5).eigenvalues;
        prop_assert!(ev.iter().all(|&l| l >= -1e-12 * norm.max(1.0)));
    }
}
