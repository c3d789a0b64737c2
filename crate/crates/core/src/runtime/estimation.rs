use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::source::MetricSource;
use super::smoothing::moving_average;
use crate::dynamics::{rk4_step, DynamicalSystem};
use crate::linalg::{fmt17, is_positive_definite, symmetrize};
use crate::{Error, Result};

/// One-measurement-per-step state estimator.
pub trait Estimator {
    fn tag(&self) -> &str;
    /// Advances `x̂` from `t` to `t + dt` holding the measurement `y`.
    fn step(&mut self, sys: &dyn DynamicalSystem, xhat: &DVector<f64>, y: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>;
}

/// `x̂̇ = f(x̂) + M(x̂,t)C(x̂)ᵀ(y − h(x̂))` with `M` and `y` held over the step.
///
/// The step is split into `substeps` RK4 steps: the injected gain scales
/// with `ν`, which easily exceeds the RK4 stability limit at `dt = 0.1`.
pub struct MetricEstimator {
    pub source: Box<dyn MetricSource>,
    pub substeps: usize,
}

impl MetricEstimator {
    pub fn new(source: Box<dyn MetricSource>) -> Self {
        MetricEstimator { source, substeps: 10 }
    }
}

/// One held-metric step of the metric estimator.
pub fn ncm_estimator_step(
    sys: &dyn DynamicalSystem,
    m: &DMatrix<f64>,
    xhat: &DVector<f64>,
    y: &DVector<f64>,
    t: f64,
    dt: f64,
    substeps: usize,
) -> Result<DVector<f64>> {
    if !is_positive_definite(m) {
        return Err(Error::NotPositiveDefinite(format!("estimator metric at t={t}")));
    }
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let mut x = xhat.clone();
    for s in 0..substeps {
        let field = |z: &DVector<f64>, tau: f64| {
            let c = sys.output_jacobian(z, tau);
            sys.f(z, tau) + m * c.transpose() * (y - sys.h(z, tau))
        };
        x = rk4_step(field, &x, t + s as f64 * h, h);
    }
    Ok(x)
}

impl Estimator for MetricEstimator {
    fn tag(&self) -> &str {
        self.source.tag()
    }

    fn step(&mut self, sys: &dyn DynamicalSystem, xhat: &DVector<f64>, y: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>> {
        let m = self.source.metric(xhat, t)?;
        ncm_estimator_step(sys, &m, xhat, y, t, dt, self.substeps)
    }
}

/// Continuous-time extended Kalman filter: Euler steps for
/// `Ṗ = AP + PAᵀ + Q − PCᵀR⁻¹CP`, RK4 for `x̂̇ = f + PCᵀR⁻¹(y − h)`.
pub struct Ekf {
    pub q: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub substeps: usize,
    pub resets: usize,
    p0: DMatrix<f64>,
}

impl Ekf {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, p0: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r), ("P0", &p0)] {
            if !is_positive_definite(m) {
                return Err(Error::NotPositiveDefinite(format!("EKF weight {name}")));
            }
        }
        let r_inv = r.cholesky().expect("checked PD").inverse();
        Ok(Ekf {
            q,
            r_inv,
            p: p0.clone(),
            substeps: 10,
            resets: 0,
            p0,
        })
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }
}

/// Stepper alias matching the operation name.
pub fn ekf_estimator(q: DMatrix<f64>, r: DMatrix<f64>, p0: DMatrix<f64>) -> Result<Ekf> {
    Ekf::new(q, r, p0)
}

impl Estimator for Ekf {
    fn tag(&self) -> &str {
        "ekf"
    }

    fn step(&mut self, sys: &dyn DynamicalSystem, xhat: &DVector<f64>, y: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>> {
        let substeps = self.substeps.max(1);
        let h = dt / substeps as f64;
        let mut x = xhat.clone();
        for s in 0..substeps {
            let tau = t + s as f64 * h;
            let a = sys.jacobian(&x, tau);
            let c = sys.output_jacobian(&x, tau);
            let gain = &self.p * c.transpose() * &self.r_inv;
            let p = &self.p;
            let field = |z: &DVector<f64>, tz: f64| sys.f(z, tz) + &gain * (y - sys.h(z, tz));
            x = rk4_step(field, &x, tau, h);
            let pdot = &a * p + p * a.transpose() + &self.q - p * c.transpose() * &self.r_inv * &c * p;
            let mut next = p + pdot * h;
            symmetrize(&mut next);
            if !is_positive_definite(&next) || !next.iter().all(|v| v.is_finite()) {
                log::warn!("EKF covariance lost definiteness at t={tau:.3}; resetting");
                self.resets += 1;
                next = self.p0.clone();
            }
            self.p = next;
        }
        Ok(x)
    }
}

/// Parameters of the steady-state bound
/// `√χ‖e(0)‖e^{−γt} + (d̄₁b̄χ + d̄₂c̄ḡν)/γ`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EstimationBound {
    pub chi: f64,
    pub nu: f64,
    pub gamma: f64,
    pub d1: f64,
    pub bbar: f64,
    pub d2: f64,
    pub cbar: f64,
    pub gbar: f64,
}

impl EstimationBound {
    pub fn steady_state(&self) -> f64 {
        (self.d1 * self.bbar * self.chi + self.d2 * self.cbar * self.gbar * self.nu) / self.gamma
    }

    pub fn at(&self, t: f64, e0: f64) -> f64 {
        self.chi.sqrt() * e0 * (-self.gamma * t).exp() + self.steady_state()
    }
}

#[derive(Debug, Clone)]
pub struct EstimationRun {
    pub tag: String,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub estimates: Vec<DVector<f64>>,
    pub errors: Vec<f64>,
    pub bound: Option<EstimationBound>,
    pub bounds: Option<Vec<f64>>,
}

impl EstimationRun {
    /// 15-point centered moving average of the error norm.
    pub fn smoothed_errors(&self) -> Vec<f64> {
        moving_average(&self.errors, 15)
    }

    /// Indices with `t > 5/γ` (all indices after the first when no bound).
    pub fn steady_state_indices(&self) -> Vec<usize> {
        let start = self.bound.map_or(0.0, |b| 5.0 / b.gamma);
        (0..self.times.len()).filter(|&k| self.times[k] > start).collect()
    }

    /// Mean of the smoothed error over the steady-state window.
    pub fn steady_state_error(&self) -> f64 {
        let sm = self.smoothed_errors();
        let idx = self.steady_state_indices();
        idx.iter().map(|&k| sm[k]).sum::<f64>() / idx.len().max(1) as f64
    }

    /// Largest smoothed error over the steady-state window.
    pub fn steady_state_max(&self) -> f64 {
        let sm = self.smoothed_errors();
        self.steady_state_indices().iter().map(|&k| sm[k]).fold(0.0, f64::max)
    }

    /// CSV: `t, x…, xhat…, error, smoothed, bound`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("xhat{i}")));
        header.extend(["error", "error_smoothed", "bound"].map(String::from));
        wr.write_record(&header)?;
        let sm = self.smoothed_errors();
        for k in 0..self.times.len() {
            let mut row = vec![fmt17(self.times[k])];
            row.extend(self.states[k].iter().map(|v| fmt17(*v)));
            row.extend(self.estimates[k].iter().map(|v| fmt17(*v)));
            row.push(fmt17(self.errors[k]));
            row.push(fmt17(sm[k]));
            row.push(self.bounds.as_ref().map_or(String::new(), |b| fmt17(b[k])));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method {}", self.tag)?;
        writeln!(w, "steps {}", self.times.len().saturating_sub(1))?;
        writeln!(w, "steady_state_mean_smoothed_error {}", fmt17(self.steady_state_error()))?;
        writeln!(w, "steady_state_max_smoothed_error {}", fmt17(self.steady_state_max()))?;
        if let Some(b) = self.bound {
            writeln!(w, "steady_state_bound {}", fmt17(b.steady_state()))?;
            writeln!(w, "gamma {}", fmt17(b.gamma))?;
        }
        Ok(())
    }
}

/// Co-integrates the plant `ẋ = f + B d₁` (RK4 with `substeps` per grid
/// interval) and the estimator fed with `y = h(x) + G d₂` once per grid step.
#[allow(clippy::too_many_arguments)]
pub fn simulate_estimation(
    sys: &dyn DynamicalSystem,
    est: &mut dyn Estimator,
    x0: &DVector<f64>,
    xhat0: &DVector<f64>,
    d1: &[DVector<f64>],
    d2: &[DVector<f64>],
    dt: f64,
    steps: usize,
    substeps: usize,
    bound: Option<EstimationBound>,
) -> Result<EstimationRun> {
    let n = sys.state_dim();
    if x0.len() != n || xhat0.len() != n {
        return Err(Error::Shape(format!("initial states must have dimension {n}")));
    }
    if d1.len() < steps || d2.len() < steps + 1 {
        return Err(Error::Shape(format!(
            "need {steps} process and {} measurement disturbance samples",
            steps + 1
        )));
    }
    if !(dt > 0.0) || steps == 0 {
        return Err(Error::Domain("need dt > 0 and at least one step".into()));
    }
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut estimates = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    let mut xh = xhat0.clone();
    let zero_u = DVector::zeros(sys.input_dim());
    for k in 0..=steps {
        let t = k as f64 * dt;
        times.push(t);
        states.push(x.clone());
        estimates.push(xh.clone());
        if k == steps {
            break;
        }
        let y = sys.h(&x, t) + sys.noise_matrix(&x, t) * &d2[k];
        let d = &d1[k];
        let h = dt / substeps.max(1) as f64;
        let mut x_next = x.clone();
        for s in 0..substeps.max(1) {
            x_next = rk4_step(|z, tau| sys.field(z, tau, &zero_u, d), &x_next, t + s as f64 * h, h);
        }
        let xh_next = est.step(sys, &xh, &y, t, dt).map_err(|e| e.context(format!("{} step {k}", est.tag())))?;
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationDiverged {
                step: k,
                context: "plant".into(),
            });
        }
        if !xh_next.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationDiverged {
                step: k,
                context: format!("{} estimator", est.tag()),
            });
        }
        x = x_next;
        xh = xh_next;
    }
    let errors: Vec<f64> = states.iter().zip(&estimates).map(|(a, b)| (a - b).norm()).collect();
    let bounds = bound.map(|b| times.iter().map(|&t| b.at(t, errors[0])).collect());
    Ok(EstimationRun {
        tag: est.tag().to_string(),
        times,
        states,
        estimates,
        errors,
        bound,
        bounds,
    })
}
