use nalgebra::{DMatrix, DVector};
use ncm_core::dynamics::{make_linear_test, make_lorenz};
use ncm_core::experiments::{disturbance_sequence, estimation_scenario, EstimationConfig};
use ncm_core::runtime::{simulate_estimation, ConstantMetric, Ekf, MetricEstimator};

fn quiet(dim: usize, len: usize) -> Vec<DVector<f64>> {
    vec![DVector::zeros(dim); len]
}

#[test]
fn scalar_estimator_error_decays_at_rate_m() {
    // ẋ = 0, y = x (so the held measurement is exact), constant M = m:
    // e(t) = e(0)·exp(−mt)
    let sys = make_linear_test(0.0);
    let m = 2.0;
    let mut est = MetricEstimator::new(Box::new(ConstantMetric::new(DMatrix::from_element(1, 1, m)).unwrap()));
    let (dt, steps) = (0.05, 40);
    let run = simulate_estimation(
        &sys,
        &mut est,
        &DVector::from_element(1, 1.5),
        &DVector::from_element(1, -0.5),
        &quiet(1, steps),
        &quiet(1, steps + 1),
        dt,
        steps,
        10,
        None,
    )
    .unwrap();
    for (k, e) in run.errors.iter().enumerate() {
        let exact = 2.0 * (-m * k as f64 * dt).exp();
        assert!((e - exact).abs() < 1e-8, "k={k}: {e} vs {exact}");
    }
}

#[test]
fn ekf_covariance_settles_on_the_riccati_fixed_point() {
    // scalar ẋ = −x, y = x: Ṗ = −2P + q − P²/r = 0  ⇒  P = r(−1 + √(1 + q/r))
    let sys = make_linear_test(-1.0);
    let (q, r) = (3.0, 0.5);
    let mut ekf = Ekf::new(DMatrix::from_element(1, 1, q), DMatrix::from_element(1, 1, r), DMatrix::from_element(1, 1, 10.0)).unwrap();
    let steps = 200;
    simulate_estimation(
        &sys,
        &mut ekf,
        &DVector::from_element(1, 1.0),
        &DVector::from_element(1, 0.0),
        &quiet(1, steps),
        &quiet(1, steps + 1),
        0.05,
        steps,
        10,
        None,
    )
    .unwrap();
    let p_star = r * (-1.0 + (1.0 + q / r).sqrt());
    assert!((ekf.covariance()[(0, 0)] - p_star).abs() < 1e-6);
    assert_eq!(ekf.resets, 0);
}

#[test]
fn disturbed_runs_share_one_plant_across_estimators() {
    let sys = make_lorenz();
    let cfg = EstimationConfig {
        steps: 30,
        ..EstimationConfig::default()
    };
    let sc = estimation_scenario(&sys, &cfg, 9).unwrap();
    let x0 = DVector::from_column_slice(&cfg.x0);
    let xh0 = DVector::from_column_slice(&cfg.xhat0);
    let mut a = MetricEstimator::new(Box::new(ConstantMetric::new(DMatrix::identity(3, 3) * 5.0).unwrap()));
    let mut b = Ekf::new(DMatrix::identity(3, 3) * 10.0, DMatrix::identity(1, 1) * 20.0, DMatrix::identity(3, 3) * 10.0).unwrap();
    let ra = simulate_estimation(&sys, &mut a, &x0, &xh0, &sc.d1, &sc.d2, cfg.dt, cfg.steps, cfg.substeps, None).unwrap();
    let rb = simulate_estimation(&sys, &mut b, &x0, &xh0, &sc.d1, &sc.d2, cfg.dt, cfg.steps, cfg.substeps, None).unwrap();
    assert_eq!(ra.states, rb.states);
    assert_eq!(ra.times, rb.times);
    for (x, y) in ra.states.iter().zip(&sc.plant.states) {
        assert_eq!(x, y);
    }
}

#[test]
fn disturbance_draws_depend_on_stream() {
    let a = disturbance_sequence(3, 5, 2.0, 1, 0);
    let b = disturbance_sequence(3, 5, 2.0, 1, 1);
    assert_ne!(a, b);
    assert!(a.iter().all(|d| (d.norm() - 2.0).abs() < 1e-12));
}
