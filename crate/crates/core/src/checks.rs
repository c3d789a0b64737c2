//! Fast self-checks of the numerical invariants, run by `ncm check`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cvstem::{solve_at, CvstemConfig, Variant};
use crate::dynamics::{
    finite_difference_jacobian, integrate, make_linear_test, make_lorenz, make_spacecraft, rk4_step, DynamicalSystem,
    LinearSystem, Trajectory,
};
use crate::metric::{cholesky_upper, estimator_ss_bound, pack_theta, tube_radius, unpack_theta, PackedTheta};
use crate::neural::{gradient_check, load_checkpoint, save_checkpoint, DeepLstmModel, GradCheckOptions, GradSample};
use crate::runtime::{care_residual, lqr_gain, Ekf, Estimator};
use crate::sdp::SolveStatus;
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// The measured quantity and its threshold.
    pub detail: String,
}

fn outcome(name: &'static str, value: f64, limit: f64, below: bool) -> CheckOutcome {
    let passed = if below { value < limit } else { value >= limit };
    let op = if below { "<" } else { "≥" };
    CheckOutcome {
        name,
        passed,
        detail: format!("{value:.3e} (need {op} {limit:.1e})"),
    }
}

fn failed(name: &'static str, err: crate::Error) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: false,
        detail: format!("error[{}]: {err}", err.class()),
    }
}

fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Worst relative `‖UᵀU − M‖/‖M‖` over random SPD matrices, `n ≤ 12`.
pub fn cholesky_round_trip(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for n in 1..=12 {
        for _ in 0..5 {
            let m = random_spd(n, &mut rng);
            let u = cholesky_upper(&m)?;
            worst = worst.max((u.transpose() * &u - &m).norm() / m.norm());
        }
    }
    Ok(worst)
}

/// Largest `|pack(unpack(θ)) − θ|` over random valid θ.
pub fn pack_unpack_identity(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for n in 1..=8 {
        let mut u = DMatrix::zeros(n, n);
        for i in 0..n {
            u[(i, i)] = rng.random_range(0.1..3.0);
            for j in (i + 1)..n {
                u[(i, j)] = rng.random_range(-2.0..2.0);
            }
        }
        let p = pack_theta(&u)?;
        let back = pack_theta(&unpack_theta(&p, n)?)?;
        let q = unpack_theta(&PackedTheta { entries: back.entries.clone() }, n)?;
        worst = worst
            .max(p.entries.iter().zip(&back.entries).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .max((q - u).amax());
    }
    Ok(worst)
}

/// Error ratio of RK4 on `ẋ = −x` over unit time when `Δt` halves.
pub fn rk4_order_ratio() -> f64 {
    let err = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        let mut x = DVector::from_element(1, 1.0);
        for k in 0..steps {
            x = rk4_step(|z, _| -z, &x, k as f64 * dt, dt);
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    err(0.1) / err(0.05)
}

/// Worst `‖A − A_fd‖/(1 + ‖A‖)` for the shipped systems at 100 random
/// states each.
pub fn jacobian_consistency(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let systems: Vec<Box<dyn DynamicalSystem>> =
        vec![Box::new(make_lorenz()), Box::new(make_spacecraft()), Box::new(make_linear_test(-1.0))];
    let mut worst = 0.0_f64;
    for sys in &systems {
        for _ in 0..100 {
            let x = DVector::from_fn(sys.state_dim(), |_, _| rng.random_range(-10.0..10.0));
            let a = sys.jacobian(&x, 0.0);
            let fd = finite_difference_jacobian(|z| sys.f(z, 0.0), &x, 1e-5);
            worst = worst.max((&a - fd).norm() / (1.0 + a.norm()));
            let c = sys.output_jacobian(&x, 0.0);
            let fd = finite_difference_jacobian(|z| sys.h(z, 0.0), &x, 1e-5);
            worst = worst.max((&c - fd).norm() / (1.0 + c.norm()));
        }
    }
    worst
}

/// Runs the EKF covariance flow of a stable LTI pair to its fixed point and
/// returns the filter Riccati residual `‖AP + PAᵀ + Q − PCᵀR⁻¹CP‖`.
pub fn ekf_are_residual() -> Result<(f64, f64)> {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let sys = LinearSystem::new(a.clone(), DMatrix::zeros(2, 1), c.clone());
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::identity(1, 1) * 0.5;
    let mut ekf = Ekf::new(q.clone(), r.clone(), DMatrix::identity(2, 2) * 5.0)?;
    let mut x = DVector::zeros(2);
    let y = DVector::zeros(1);
    for k in 0..4000 {
        x = ekf.step(&sys, &x, &y, k as f64 * 0.01, 0.01)?;
    }
    let p = ekf.covariance();
    let res = care_residual(&a.transpose(), &c.transpose(), &q, &r, p)?.norm();
    Ok((res, (p - p.transpose()).amax()))
}

/// Save, reload and save again; the two checkpoints and the reloaded
/// model's outputs must match bit for bit.
pub fn checkpoint_round_trip(seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DeepLstmModel::new_random(3, 8, 2, false, seed, &mut rng)?;
    let mut first = Vec::new();
    save_checkpoint(&model, &mut first)?;
    let back = load_checkpoint(first.as_slice())?;
    let mut second = Vec::new();
    save_checkpoint(&back, &mut second)?;
    let xs: Vec<DVector<f64>> = (0..6).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0))).collect();
    let same_outputs = model
        .forward(&xs, &[])?
        .iter()
        .flatten()
        .zip(back.forward(&xs, &[])?.iter().flatten())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(first == second && same_outputs)
}

/// BPTT versus central differences on a random `H = 4`, `L = 2`, `T = 5`
/// model, all parameters.
pub fn lstm_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = DeepLstmModel::new_random(3, 4, 2, false, seed, &mut rng)?;
    let k = model.output_dim();
    let s = GradSample {
        inputs: (0..5).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0))).collect(),
        targets: (0..5).map(|_| DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))).collect(),
    };
    Ok(gradient_check(
        &model,
        &s,
        &GradCheckOptions {
            count: usize::MAX,
            seed,
            ..GradCheckOptions::default()
        },
    ))
}

/// `(χ at α = 0.5, status at α = 1.5)` for the contraction problem of
/// `ẋ = −x` along a 10-step trajectory.
pub fn linear_contraction_oracle() -> Result<(f64, SolveStatus)> {
    let sys = make_linear_test(-1.0);
    let traj: Trajectory = integrate(&sys, &DVector::from_element(1, 1.0), &mut |_, _| DVector::zeros(0), &mut |_| DVector::zeros(0), 0.1, 10)?;
    let cfg = CvstemConfig {
        variant: Variant::Contraction,
        ..CvstemConfig::default()
    };
    let (inside, _) = solve_at(&traj, &sys, 0.5, &cfg)?;
    let (outside, _) = solve_at(&traj, &sys, 1.5, &cfg)?;
    let chi = if inside.status == SolveStatus::Optimal { inside.chi } else { f64::NAN };
    Ok((chi, outside.status))
}

/// Runs every check. Each one takes well under a second.
pub fn run_all() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.push(match cholesky_round_trip(1) {
        Ok(v) => outcome("cholesky-round-trip", v, 1e-10, true),
        Err(e) => failed("cholesky-round-trip", e),
    });
    out.push(match pack_unpack_identity(2) {
        Ok(v) => outcome("pack-unpack-identity", v, 1e-15, true),
        Err(e) => failed("pack-unpack-identity", e),
    });
    out.push(outcome("rk4-order", rk4_order_ratio(), 16.0 * 0.9, false));
    out.push(outcome("jacobian-consistency", jacobian_consistency(3), 1e-6, true));
    out.push(match ekf_are_residual() {
        Ok((res, asym)) => {
            let mut o = outcome("ekf-riccati-fixed-point", res, 1e-4, true);
            o.passed &= asym == 0.0;
            o.detail.push_str(&format!(", asymmetry {asym:.1e}"));
            o
        }
        Err(e) => failed("ekf-riccati-fixed-point", e),
    });
    out.push(match checkpoint_round_trip(4) {
        Ok(same) => CheckOutcome {
            name: "checkpoint-reload",
            passed: same,
            detail: if same { "bit identical".into() } else { "reloaded checkpoint differs".into() },
        },
        Err(e) => failed("checkpoint-reload", e),
    });
    out.push(match lstm_gradient_error(5) {
        Ok(v) => outcome("lstm-gradient", v, 1e-5, true),
        Err(e) => failed("lstm-gradient", e),
    });
    out.push(match tube_radius(0.15, 3.0116, 0.58) {
        Ok(r) => outcome("tube-radius", (r - 0.4488).abs(), 1e-4, true),
        Err(e) => failed("tube-radius", e),
    });
    let g = 3.4970;
    out.push(match estimator_ss_bound(3f64.sqrt(), 1.0, 1.0, 1.0, 1.0, g, 9.2977, 133.75) {
        Ok(b) => outcome("estimator-bound", (b - 42.852).abs(), 0.05, true),
        Err(e) => failed("estimator-bound", e),
    });
    out.push(match linear_contraction_oracle() {
        Ok((chi, status)) => CheckOutcome {
            name: "linear-contraction-oracle",
            passed: (chi - 1.0).abs() < 1e-6 && status == SolveStatus::Infeasible,
            detail: format!("chi {chi:.9} inside, {status} outside"),
        },
        Err(e) => failed("linear-contraction-oracle", e),
    });
    out.push({
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        match lqr_gain(&a, &b, &q, &r).and_then(|(_, p)| care_residual(&a, &b, &q, &r, &p)) {
            Ok(res) => outcome("lqr-riccati", res.norm(), 1e-9, true),
            Err(e) => failed("lqr-riccati", e),
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
