use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::lqr::lqr_gain;
use super::planner::Obstacle;
use super::source::MetricSource;
use crate::dynamics::{DynamicalSystem, Trajectory};
use crate::linalg::{fmt17, is_positive_definite};
use crate::{Error, Result};

/// Tracking feedback `u(x, x_d, u_nom)`.
///
/// Inside grid interval `k` the controller is evaluated at every RK4 stage
/// with the state feedback continuous in `x`; anything that depends on the
/// grid (metric, gain) is held at `t_k`.
pub trait Controller {
    fn tag(&self) -> &str;
    fn input(
        &mut self,
        sys: &dyn DynamicalSystem,
        x: &DVector<f64>,
        xd: &DVector<f64>,
        u_nom: &DVector<f64>,
        tk: f64,
    ) -> Result<DVector<f64>>;
}

fn clamp(u: DVector<f64>, bounds: Option<(f64, f64)>) -> DVector<f64> {
    match bounds {
        Some((lo, hi)) => u.map(|v| v.clamp(lo, hi)),
        None => u,
    }
}

/// `u = u_nom − B₁(x)ᵀM(x,t)(x − x_d)`, then clamped to the input box.
pub struct MetricTracking {
    pub source: Box<dyn MetricSource>,
    pub input_bounds: Option<(f64, f64)>,
}

/// The regulator `u = −B₁ᵀM x` (use `x_d = 0`, `u_nom = 0`).
pub fn ncm_controller(source: Box<dyn MetricSource>) -> MetricTracking {
    MetricTracking {
        source,
        input_bounds: None,
    }
}

impl MetricTracking {
    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.input_bounds = Some((lo, hi));
        self
    }
}

impl Controller for MetricTracking {
    fn tag(&self) -> &str {
        self.source.tag()
    }

    fn input(
        &mut self,
        sys: &dyn DynamicalSystem,
        x: &DVector<f64>,
        xd: &DVector<f64>,
        u_nom: &DVector<f64>,
        tk: f64,
    ) -> Result<DVector<f64>> {
        let m = self.source.metric(x, tk)?;
        if !is_positive_definite(&m) {
            return Err(Error::NotPositiveDefinite(format!("control metric at t={tk}")));
        }
        let b = sys.input_matrix(x, tk);
        Ok(clamp(u_nom - b.transpose() * (m * (x - xd)), self.input_bounds))
    }
}

/// LQR on the linearization about the nominal state, re-solved per grid
/// time: `u = u_nom − K(x_d)(x − x_d)`.
pub struct LqrTracking {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub input_bounds: Option<(f64, f64)>,
    gains: HashMap<u64, DMatrix<f64>>,
}

impl LqrTracking {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        LqrTracking {
            q,
            r,
            input_bounds: None,
            gains: HashMap::new(),
        }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.input_bounds = Some((lo, hi));
        self
    }
}

impl Controller for LqrTracking {
    fn tag(&self) -> &str {
        "lqr"
    }

    fn input(
        &mut self,
        sys: &dyn DynamicalSystem,
        x: &DVector<f64>,
        xd: &DVector<f64>,
        u_nom: &DVector<f64>,
        tk: f64,
    ) -> Result<DVector<f64>> {
        let key = tk.to_bits();
        if !self.gains.contains_key(&key) {
            // The gain is fixed per grid interval, so the first call of the
            // interval (at x_d(t_k)) defines the linearization point.
            let a = sys.jacobian(xd, tk) + sys.input_jacobian(xd, u_nom, tk);
            let b = sys.input_matrix(xd, tk);
            let (k, _) = lqr_gain(&a, &b, &self.q, &self.r).map_err(|e| e.context(format!("lqr at t={tk}")))?;
            self.gains.clear();
            self.gains.insert(key, k);
        }
        let k = &self.gains[&key];
        Ok(clamp(u_nom - k * (x - xd), self.input_bounds))
    }
}

#[derive(Debug, Clone)]
pub struct SimulateControlOptions {
    /// RK4 substeps per grid interval.
    pub substeps: usize,
    pub tube_radius: f64,
    /// Violations before this time are reported but not counted.
    pub transient: f64,
    pub obstacles: Vec<Obstacle>,
    pub position: [usize; 2],
}

impl Default for SimulateControlOptions {
    fn default() -> Self {
        SimulateControlOptions {
            substeps: 10,
            tube_radius: f64::INFINITY,
            transient: 0.0,
            obstacles: Vec::new(),
            position: [0, 1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlRun {
    pub tag: String,
    pub times: Vec<f64>,
    /// The plan re-integrated on the simulation substeps.
    pub nominal: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    /// Applied input at each grid time.
    pub inputs: Vec<DVector<f64>>,
    pub deviations: Vec<f64>,
    /// `∫‖u‖²dt` by the trapezoid rule on the substep samples.
    pub effort: f64,
    pub min_input: f64,
    pub max_input: f64,
    pub tube_radius: f64,
    pub transient: f64,
    pub violations: Vec<bool>,
    /// Smallest `distance − radius` over the obstacles, per grid time.
    pub clearance: Vec<f64>,
}

impl ControlRun {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_deviation_after_transient(&self) -> f64 {
        self.times
            .iter()
            .zip(&self.deviations)
            .filter(|(t, _)| **t >= self.transient)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    }

    /// Violations at `t ≥ transient`.
    pub fn violation_count(&self) -> usize {
        self.times
            .iter()
            .zip(&self.violations)
            .filter(|(t, v)| **t >= self.transient && **v)
            .count()
    }

    pub fn min_clearance(&self) -> f64 {
        self.clearance.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV: `t, x…, xd…, u…, deviation, violation, clearance`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("xd{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        header.extend(["deviation", "violation", "clearance"].map(String::from));
        wr.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt17(self.times[k])];
            row.extend(self.states[k].iter().map(|v| fmt17(*v)));
            row.extend(self.nominal[k].iter().map(|v| fmt17(*v)));
            row.extend(self.inputs[k].iter().map(|v| fmt17(*v)));
            row.push(fmt17(self.deviations[k]));
            row.push(u8::from(self.violations[k]).to_string());
            row.push(fmt17(self.clearance[k]));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method {}", self.tag)?;
        writeln!(w, "effort {}", fmt17(self.effort))?;
        writeln!(w, "min_input {}", fmt17(self.min_input))?;
        writeln!(w, "max_input {}", fmt17(self.max_input))?;
        writeln!(w, "max_deviation {}", fmt17(self.max_deviation()))?;
        writeln!(w, "max_deviation_after_transient {}", fmt17(self.max_deviation_after_transient()))?;
        writeln!(w, "tube_radius {}", fmt17(self.tube_radius))?;
        writeln!(w, "violations {}", self.violation_count())?;
        writeln!(w, "min_clearance {}", fmt17(self.min_clearance()))?;
        Ok(())
    }
}

/// Tracks `plan` (states and held inputs on its grid) from `plan`'s first
/// state under disturbances `d[k]` held over interval `k`.
pub fn simulate_control(
    sys: &dyn DynamicalSystem,
    plan: &Trajectory,
    ctrl: &mut dyn Controller,
    d: &[DVector<f64>],
    opts: &SimulateControlOptions,
) -> Result<ControlRun> {
    let x0 = plan.states.first().ok_or_else(|| Error::Shape("empty plan".into()))?.clone();
    simulate_control_from(sys, plan, ctrl, &x0, d, opts)
}

/// As [`simulate_control`] with an explicit initial state.
pub fn simulate_control_from(
    sys: &dyn DynamicalSystem,
    plan: &Trajectory,
    ctrl: &mut dyn Controller,
    x0: &DVector<f64>,
    d: &[DVector<f64>],
    opts: &SimulateControlOptions,
) -> Result<ControlRun> {
    let n = sys.state_dim();
    let steps = plan.steps();
    let u_plan = plan
        .inputs
        .as_ref()
        .ok_or_else(|| Error::Config("plan has no inputs to track".into()))?;
    if x0.len() != n || plan.state_dim() != n {
        return Err(Error::Shape(format!("plan and initial state must have dimension {n}")));
    }
    if d.len() < steps {
        return Err(Error::Shape(format!("need {steps} disturbance samples, got {}", d.len())));
    }
    let sub = opts.substeps.max(1);
    let mut x = x0.clone();
    let mut xd = plan.states[0].clone();
    let mut run = ControlRun {
        tag: ctrl.tag().to_string(),
        times: plan.times.clone(),
        nominal: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        deviations: Vec::with_capacity(steps + 1),
        effort: 0.0,
        min_input: f64::INFINITY,
        max_input: f64::NEG_INFINITY,
        tube_radius: opts.tube_radius,
        transient: opts.transient,
        violations: Vec::with_capacity(steps + 1),
        clearance: Vec::with_capacity(steps + 1),
    };
    let [ix, iy] = opts.position;
    for k in 0..=steps {
        let tk = plan.times[k];
        let uk = ctrl.input(sys, &x, &xd, &u_plan[k], tk).map_err(|e| e.context(format!("control step {k}")))?;
        run.min_input = run.min_input.min(uk.min());
        run.max_input = run.max_input.max(uk.max());
        let dev = (&x - &xd).norm();
        run.deviations.push(dev);
        run.violations.push(dev > opts.tube_radius);
        let cl = opts
            .obstacles
            .iter()
            .map(|o| o.clearance([x[ix], x[iy]]))
            .fold(f64::INFINITY, f64::min);
        run.clearance.push(cl);
        run.states.push(x.clone());
        run.nominal.push(xd.clone());
        run.inputs.push(uk.clone());
        if k == steps {
            break;
        }
        let h = (plan.times[k + 1] - tk) / sub as f64;
        let un = &u_plan[k];
        let dk = &d[k];
        let mut u_start = uk;
        for s in 0..sub {
            let t = tk + s as f64 * h;
            // Augmented state (x, x_d) so both see identical stage times.
            let mut err = None;
            let mut field = |x: &DVector<f64>, xd: &DVector<f64>, tau: f64| -> (DVector<f64>, DVector<f64>) {
                let u = match ctrl.input(sys, x, xd, un, tk) {
                    Ok(u) => u,
                    Err(e) => {
                        err.get_or_insert(e);
                        DVector::zeros(un.len())
                    }
                };
                (sys.field(x, tau, &u, dk), sys.field(xd, tau, un, &DVector::zeros(0)))
            };
            let (a1, b1) = field(&x, &xd, t);
            let (a2, b2) = field(&(&x + &a1 * (0.5 * h)), &(&xd + &b1 * (0.5 * h)), t + 0.5 * h);
            let (a3, b3) = field(&(&x + &a2 * (0.5 * h)), &(&xd + &b2 * (0.5 * h)), t + 0.5 * h);
            let (a4, b4) = field(&(&x + &a3 * h), &(&xd + &b3 * h), t + h);
            if let Some(e) = err {
                return Err(e.context(format!("control step {k}")));
            }
            x += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
            xd += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationDiverged {
                    step: k,
                    context: format!("{} closed loop", run.tag),
                });
            }
            let u_end = ctrl.input(sys, &x, &xd, un, tk)?;
            run.min_input = run.min_input.min(u_end.min());
            run.max_input = run.max_input.max(u_end.max());
            run.effort += 0.5 * (u_start.norm_squared() + u_end.norm_squared()) * h;
            u_start = u_end;
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, make_linear_test, LinearSystem};
    use crate::runtime::ConstantMetric;

    #[test]
    fn regulator_zero_state_gives_zero_input() {
        let sys = make_linear_test(-1.0);
        let mut c = ncm_controller(Box::new(ConstantMetric::new(DMatrix::from_element(1, 1, 2.0)).unwrap()));
        let z = DVector::zeros(1);
        let u = c.input(&sys, &z, &z, &z, 0.0).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn scalar_regulator_contracts_at_one_plus_m() {
        let sys = make_linear_test(-1.0);
        let m = 2.0;
        let mut c = ncm_controller(Box::new(ConstantMetric::new(DMatrix::from_element(1, 1, m)).unwrap()));
        let steps = 100;
        let dt = 0.01;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let mut plan = Trajectory::new(times, vec![DVector::zeros(1); steps + 1]).unwrap();
        plan.inputs = Some(vec![DVector::zeros(1); steps + 1]);
        let x0 = DVector::from_element(1, 1.0);
        let d = vec![DVector::zeros(1); steps];
        let run = simulate_control_from(&sys, &plan, &mut c, &x0, &d, &SimulateControlOptions::default()).unwrap();
        let exact = (-(1.0 + m) * 1.0).exp();
        assert!((run.states[steps][0] - exact).abs() < 1e-9);
    }

    #[test]
    fn undisturbed_tracking_stays_on_plan() {
        let sys = LinearSystem::double_integrator();
        let steps = 40;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * 0.1).collect();
        let inputs: Vec<DVector<f64>> = (0..=steps).map(|k| DVector::from_element(1, (k as f64 * 0.3).sin())).collect();
        let mut plan = integrate(
            &sys,
            &DVector::zeros(2),
            &mut |_, t| inputs[(t / 0.1).round() as usize].clone(),
            &mut |_| DVector::zeros(0),
            0.1,
            steps,
        )
        .unwrap();
        assert_eq!(plan.times.len(), times.len());
        plan.inputs = Some(inputs.clone());
        let mut c = ncm_controller(Box::new(ConstantMetric::new(DMatrix::identity(2, 2) * 5.0).unwrap()));
        let d = vec![DVector::zeros(2); steps];
        let run = simulate_control(&sys, &plan, &mut c, &d, &SimulateControlOptions::default()).unwrap();
        assert!(run.max_deviation() < 1e-6);
        let nominal_effort: f64 = inputs[..steps].iter().map(|u| u.norm_squared()).sum::<f64>() * 0.1;
        assert!((run.effort - nominal_effort).abs() < 0.05 * nominal_effort);
    }

    #[test]
    fn violation_flags_follow_deviation() {
        let sys = make_linear_test(-1.0);
        let mut c = ncm_controller(Box::new(ConstantMetric::new(DMatrix::from_element(1, 1, 1.0)).unwrap()));
        let steps = 20;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * 0.1).collect();
        let mut plan = Trajectory::new(times, vec![DVector::zeros(1); steps + 1]).unwrap();
        plan.inputs = Some(vec![DVector::zeros(1); steps + 1]);
        let opts = SimulateControlOptions {
            tube_radius: 0.5,
            ..SimulateControlOptions::default()
        };
        let d = vec![DVector::zeros(1); steps];
        let run = simulate_control_from(&sys, &plan, &mut c, &DVector::from_element(1, 1.0), &d, &opts).unwrap();
        for (dev, v) in run.deviations.iter().zip(&run.violations) {
            assert_eq!(*v, *dev > 0.5);
        }
        assert!(run.effort >= 0.0);
    }
}
