use nalgebra::DVector;

use super::{DynamicalSystem, Trajectory};
use crate::{Error, Result};

/// One classical RK4 step of `ẋ = g(x, t)`.
pub fn rk4_step<F>(g: F, x: &DVector<f64>, t: f64, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64>,
{
    let k1 = g(x, t);
    let k2 = g(&(x + &k1 * (0.5 * dt)), t + 0.5 * dt);
    let k3 = g(&(x + &k2 * (0.5 * dt)), t + 0.5 * dt);
    let k4 = g(&(x + &k3 * dt), t + dt);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    /// RK4 sub-steps per grid interval; inputs and disturbances stay held.
    pub substeps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { substeps: 1 }
    }
}

/// Integrates the closed-loop field with fixed-step RK4 on the grid
/// `tᵢ = i·dt`, `i = 0..=steps`. The input `u(xᵢ, tᵢ)` and disturbance
/// `d(tᵢ)` are sampled at grid points and held over each interval.
pub fn integrate(
    system: &dyn DynamicalSystem,
    x0: &DVector<f64>,
    u_policy: &mut dyn FnMut(&DVector<f64>, f64) -> DVector<f64>,
    d_signal: &mut dyn FnMut(f64) -> DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    integrate_with(system, x0, u_policy, d_signal, dt, steps, IntegrateOptions::default())
}

pub fn integrate_with(
    system: &dyn DynamicalSystem,
    x0: &DVector<f64>,
    u_policy: &mut dyn FnMut(&DVector<f64>, f64) -> DVector<f64>,
    d_signal: &mut dyn FnMut(f64) -> DVector<f64>,
    dt: f64,
    steps: usize,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if steps < 1 {
        return Err(Error::Domain("at least one integration step is required".into()));
    }
    if x0.len() != system.state_dim() {
        return Err(Error::Shape(format!(
            "initial state has {} entries, system '{}' has {}",
            x0.len(),
            system.name(),
            system.state_dim()
        )));
    }
    let substeps = opts.substeps.max(1);
    let h = dt / substeps as f64;

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut disturbances = Vec::with_capacity(steps + 1);

    let mut x = x0.clone();
    for i in 0..=steps {
        let t = i as f64 * dt;
        let u = u_policy(&x, t);
        let d = d_signal(t);
        times.push(t);
        states.push(x.clone());
        if i < steps {
            let mut tau = t;
            for _ in 0..substeps {
                x = rk4_step(|z, s| system.field(z, s, &u, &d), &x, tau, h);
                tau += h;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationDiverged {
                    step: i + 1,
                    context: format!("system '{}' produced a non-finite state", system.name()),
                });
            }
        }
        inputs.push(u);
        disturbances.push(d);
    }

    let mut traj = Trajectory::new(times, states)?;
    if system.input_dim() > 0 {
        traj.inputs = Some(inputs);
    }
    if disturbances.iter().any(|d| !d.is_empty()) {
        traj.disturbances = Some(disturbances);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_linear_test, make_lorenz};

    fn zero_u(_: &DVector<f64>, _: f64) -> DVector<f64> {
        DVector::zeros(0)
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let sys = make_linear_test(-1.0);
        let mut u = |_: &DVector<f64>, _: f64| DVector::zeros(1);
        let mut d = |_: f64| DVector::zeros(0);
        let traj = integrate(&sys, &DVector::from_element(1, 1.0), &mut u, &mut d, 0.1, 10).unwrap();
        assert_eq!(traj.len(), 11);
        assert!((traj.states[10][0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn rejects_zero_steps() {
        let sys = make_lorenz();
        let err = integrate(&sys, &DVector::zeros(3), &mut zero_u, &mut |_| DVector::zeros(0), 0.1, 0);
        assert!(err.is_err());
    }

    #[test]
    fn lorenz_stays_finite() {
        let sys = make_lorenz();
        let x0 = DVector::from_vec(vec![-1.0, 2.0, 3.0]);
        let traj = integrate(&sys, &x0, &mut zero_u, &mut |_| DVector::zeros(0), 0.1, 500).unwrap();
        assert!(traj.states.iter().all(|x| x.iter().all(|v| v.is_finite() && v.abs() < 100.0)));
    }

    #[test]
    fn divergence_reports_step() {
        let sys = make_linear_test(400.0);
        let mut u = |_: &DVector<f64>, _: f64| DVector::zeros(1);
        let err = integrate(&sys, &DVector::from_element(1, 1.0), &mut u, &mut |_| DVector::zeros(0), 1.0, 1000)
            .unwrap_err();
        assert!(matches!(err, Error::IntegrationDiverged { .. }));
    }
}
