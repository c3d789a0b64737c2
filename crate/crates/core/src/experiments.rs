//! Reference experiments: Lorenz state estimation under process and
//! measurement noise, and obstacle-avoiding spacecraft tracking.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvstem::{line_search, solve_at, CvstemConfig, LineSearchResult, Variant};
use crate::dynamics::{integrate_with, DynamicalSystem, IntegrateOptions, Trajectory};
use crate::metric::{read_samples_csv, tube_radius, write_samples_csv, MetricSample};
use crate::runtime::{
    ekf_estimator, plan_nominal_best, simulate_control, simulate_estimation, ControlRun, Controller, EstimationBound,
    EstimationRun, LqrTracking, MetricEstimator, MetricTracking, NcmMetric, Obstacle, PlanResult, PlannerConfig,
    SampledMetric, SimulateControlOptions,
};
use crate::neural::DeepLstmModel;
use crate::{Error, Result};

/// `len` samples of `d̄·v` with `v` uniform on the unit sphere of `R^dim`.
///
/// `stream` selects an independent ChaCha stream for the same seed, so
/// process and measurement noise never share draws.
pub fn disturbance_sequence(dim: usize, len: usize, dbar: f64, seed: u64, stream: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len)
        .map(|_| {
            if dim == 0 {
                return DVector::zeros(0);
            }
            loop {
                let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = v.norm();
                if norm > 1e-12 {
                    break v * (dbar / norm);
                }
            }
        })
        .collect()
}

/// Uniform samples from the box `[lo, hi]`.
pub fn sample_initial_conditions(count: usize, lo: &[f64], hi: &[f64], seed: u64) -> Result<Vec<DVector<f64>>> {
    if lo.len() != hi.len() {
        return Err(Error::Shape(format!("box bounds have lengths {} and {}", lo.len(), hi.len())));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::Config("initial-condition box needs lo ≤ hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(&a, &b)| if a == b { a } else { rng.random_range(a..b) })))
        .collect())
}

/// Unforced, undisturbed trajectories from each initial condition.
pub fn sample_trajectories(
    sys: &dyn DynamicalSystem,
    x0s: &[DVector<f64>],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Vec<Trajectory>> {
    let opts = IntegrateOptions { substeps };
    x0s.par_iter()
        .enumerate()
        .map(|(s, x0)| {
            integrate_with(sys, x0, &mut |_, _| DVector::zeros(0), &mut |_| DVector::zeros(0), dt, steps, opts)
                .map_err(|e| e.context(format!("trajectory {s}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Ncm,
    Cvstem,
    Ekf,
}

impl std::str::FromStr for EstimatorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncm" => Ok(EstimatorMethod::Ncm),
            "cvstem" => Ok(EstimatorMethod::Cvstem),
            "ekf" => Ok(EstimatorMethod::Ekf),
            other => Err(Error::Config(format!("unknown estimation method '{other}' (expected ncm, cvstem or ekf)"))),
        }
    }
}

impl std::fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorMethod::Ncm => "ncm",
            EstimatorMethod::Cvstem => "cvstem",
            EstimatorMethod::Ekf => "ekf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMethod {
    Ncm,
    Cvstem,
    Lqr,
}

impl std::str::FromStr for ControllerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncm" => Ok(ControllerMethod::Ncm),
            "cvstem" => Ok(ControllerMethod::Cvstem),
            "lqr" => Ok(ControllerMethod::Lqr),
            other => Err(Error::Config(format!("unknown control method '{other}' (expected ncm, cvstem or lqr)"))),
        }
    }
}

impl std::fmt::Display for ControllerMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerMethod::Ncm => "ncm",
            ControllerMethod::Cvstem => "cvstem",
            ControllerMethod::Lqr => "lqr",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    /// Sup-norm of the process disturbance `d₁`.
    pub d1: f64,
    /// Sup-norm of the measurement disturbance `d₂`.
    pub d2: f64,
    pub alpha_grid: Vec<f64>,
    pub gamma_ratio: f64,
    /// EKF weights as multiples of the identity. `P(0) = ekf_p0·I`.
    pub ekf_q: f64,
    pub ekf_r: f64,
    pub ekf_p0: f64,
    /// RK4 substeps per measurement interval for the plant and every estimator.
    pub substeps: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            x0: vec![-1.0, 2.0, 3.0],
            xhat0: vec![150.1, -1.5, -6.0],
            dt: 0.1,
            steps: 250,
            d1: 20.0 * 3f64.sqrt(),
            d2: 20.0,
            alpha_grid: CvstemConfig::linear_grid(1.0, 6.0, 0.25),
            gamma_ratio: 1.0,
            ekf_q: 10.0,
            ekf_r: 20.0,
            ekf_p0: 10.0,
            substeps: 10,
        }
    }
}

impl EstimationConfig {
    pub fn cvstem(&self) -> CvstemConfig {
        CvstemConfig {
            variant: Variant::Estimator,
            alpha_grid: self.alpha_grid.clone(),
            delta_t: self.dt,
            gamma_ratio: self.gamma_ratio,
            ..CvstemConfig::default()
        }
    }

    fn check(&self, sys: &dyn DynamicalSystem) -> Result<()> {
        let n = sys.state_dim();
        if self.x0.len() != n || self.xhat0.len() != n {
            return Err(Error::Config(format!("x0 and xhat0 must have {n} entries")));
        }
        if self.steps == 0 || !(self.dt > 0.0) {
            return Err(Error::Config("estimation needs steps ≥ 1 and dt > 0".into()));
        }
        Ok(())
    }
}

/// One disturbance realization with the plant trajectory it produces.
#[derive(Debug, Clone)]
pub struct EstimationScenario {
    pub seed: u64,
    pub d1: Vec<DVector<f64>>,
    pub d2: Vec<DVector<f64>>,
    pub plant: Trajectory,
}

/// Draws `d₁` (stream 0) and `d₂` (stream 1) for `seed` and integrates the
/// disturbed plant from `x0`.
pub fn estimation_scenario(sys: &dyn DynamicalSystem, cfg: &EstimationConfig, seed: u64) -> Result<EstimationScenario> {
    cfg.check(sys)?;
    let d1 = disturbance_sequence(sys.disturbance_dim(), cfg.steps, cfg.d1, seed, 0);
    let d2 = disturbance_sequence(sys.noise_dim(), cfg.steps + 1, cfg.d2, seed, 1);
    let x0 = DVector::from_column_slice(&cfg.x0);
    let dt = cfg.dt;
    let plant = integrate_with(
        sys,
        &x0,
        &mut |_, _| DVector::zeros(0),
        &mut |t| d1[((t / dt).round() as usize).min(d1.len() - 1)].clone(),
        dt,
        cfg.steps,
        IntegrateOptions { substeps: cfg.substeps },
    )?;
    Ok(EstimationScenario { seed, d1, d2, plant })
}

/// Sampling-based CV-STEM estimator design along a plant trajectory.
#[derive(Debug, Clone)]
pub struct EstimatorDesign {
    pub line_search: LineSearchResult,
    pub bound: EstimationBound,
}

pub fn design_estimator(sys: &dyn DynamicalSystem, plant: &Trajectory, cfg: &EstimationConfig) -> Result<EstimatorDesign> {
    let ls = line_search(plant, sys, &cfg.cvstem())?;
    let opt = ls.optimum();
    let b = sys.bounds();
    let bound = EstimationBound {
        chi: opt.chi,
        nu: opt.nu,
        gamma: cfg.gamma_ratio * ls.alpha_star,
        d1: cfg.d1,
        bbar: b.b,
        d2: cfg.d2,
        cbar: b.c,
        gbar: b.g,
    };
    Ok(EstimatorDesign { line_search: ls, bound })
}

/// Runs one estimator on a scenario. `ncm` requires a model.
pub fn run_estimation(
    sys: &dyn DynamicalSystem,
    cfg: &EstimationConfig,
    scenario: &EstimationScenario,
    design: &EstimatorDesign,
    method: EstimatorMethod,
    model: Option<&DeepLstmModel>,
) -> Result<EstimationRun> {
    cfg.check(sys)?;
    let n = sys.state_dim();
    let x0 = DVector::from_column_slice(&cfg.x0);
    let xh0 = DVector::from_column_slice(&cfg.xhat0);
    let run = |est: &mut dyn crate::runtime::Estimator| {
        simulate_estimation(sys, est, &x0, &xh0, &scenario.d1, &scenario.d2, cfg.dt, cfg.steps, cfg.substeps, Some(design.bound))
    };
    match method {
        EstimatorMethod::Cvstem => {
            let mut est = MetricEstimator::new(Box::new(SampledMetric::new(&design.line_search.samples)?));
            est.substeps = cfg.substeps;
            run(&mut est)
        }
        EstimatorMethod::Ncm => {
            let model = model.ok_or_else(|| Error::Config("the ncm estimator needs a trained model".into()))?;
            if model.state_dim != n {
                return Err(Error::Shape(format!("model state dimension {} but system has {n}", model.state_dim)));
            }
            let mut est = MetricEstimator::new(Box::new(NcmMetric::new(model.clone())));
            est.substeps = cfg.substeps;
            run(&mut est)
        }
        EstimatorMethod::Ekf => {
            let p = sys.output_dim();
            let mut ekf = ekf_estimator(
                DMatrix::identity(n, n) * cfg.ekf_q,
                DMatrix::identity(p, p) * cfg.ekf_r,
                DMatrix::identity(n, n) * cfg.ekf_p0,
            )?;
            ekf.substeps = cfg.substeps;
            run(&mut ekf)
        }
    }
}

/// The six radius-3 obstacles of the spacecraft scene.
pub fn spacecraft_obstacles() -> Vec<Obstacle> {
    [(0.0, 11.0), (5.0, 3.0), (8.0, 11.0), (13.0, 3.0), (16.0, 11.0), (21.0, 3.0)]
        .iter()
        .map(|&(x, y)| Obstacle {
            center: [x, y],
            radius: 3.0,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub x0: Vec<f64>,
    pub goal: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
    /// Sup-norm of the disturbance.
    pub dbar: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Tube radius assumed by the first plan, before any metric exists.
    pub tube_guess: f64,
    /// Replans allowed when the synthesized tube exceeds the planned one.
    pub max_replans: usize,
    pub lqr_q: f64,
    pub lqr_r: f64,
    /// Violations before this time are not counted.
    pub transient: f64,
    pub substeps: usize,
    pub planner: PlannerConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            x0: vec![0.0, 0.0, std::f64::consts::PI / 12.0, 0.0, 0.0, 0.0],
            goal: vec![20.0, 18.0, 0.0, 0.0, 0.0, 0.0],
            obstacles: spacecraft_obstacles(),
            dbar: 0.15,
            alpha: 0.58,
            lambda: 0.013164,
            tube_guess: 0.4488,
            max_replans: 3,
            lqr_q: 2.4,
            lqr_r: 1.0,
            transient: 0.0,
            substeps: 10,
            planner: PlannerConfig::default(),
        }
    }
}

impl ControlConfig {
    pub fn cvstem(&self) -> CvstemConfig {
        CvstemConfig {
            variant: Variant::Controller,
            alpha_grid: vec![self.alpha],
            delta_t: self.planner.dt,
            lambda: self.lambda,
            ..CvstemConfig::default()
        }
    }

    fn states(&self, sys: &dyn DynamicalSystem) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = sys.state_dim();
        if self.x0.len() != n || self.goal.len() != n {
            return Err(Error::Config(format!("x0 and goal must have {n} entries")));
        }
        Ok((DVector::from_column_slice(&self.x0), DVector::from_column_slice(&self.goal)))
    }
}

/// Plan, controller metric and tube radius that are mutually consistent.
#[derive(Debug, Clone)]
pub struct ControlDesign {
    pub plan: PlanResult,
    pub samples: Vec<MetricSample>,
    pub chi: f64,
    pub nu: f64,
    pub tube_radius: f64,
    pub replans: usize,
}

/// Scalar part of a [`ControlDesign`] as stored in `design.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSummary {
    pub chi: f64,
    pub nu: f64,
    pub tube_radius: f64,
    pub replans: usize,
    pub effort: f64,
    pub terminal_error: f64,
    pub min_clearance: f64,
    pub iterations: usize,
    pub rounds: usize,
    pub success: bool,
}

impl ControlDesign {
    pub fn summary(&self) -> DesignSummary {
        DesignSummary {
            chi: self.chi,
            nu: self.nu,
            tube_radius: self.tube_radius,
            replans: self.replans,
            effort: self.plan.effort,
            terminal_error: self.plan.terminal_error,
            min_clearance: self.plan.min_clearance,
            iterations: self.plan.iterations,
            rounds: self.plan.rounds,
            success: self.plan.success,
        }
    }

    /// Writes `plan.csv`, `metric_samples.csv` and `design.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.plan.trajectory.write_csv(File::create(dir.join(PLAN_FILE))?)?;
        write_samples_csv(&self.samples, File::create(dir.join(SAMPLES_FILE))?)?;
        let mut f = File::create(dir.join(DESIGN_FILE))?;
        serde_json::to_writer_pretty(&mut f, &self.summary())?;
        writeln!(f)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let open = |name: &str| {
            let p = dir.join(name);
            File::open(&p).map_err(|e| Error::Io(e).context(p.display().to_string()))
        };
        let trajectory = Trajectory::read_csv(open(PLAN_FILE)?)?;
        if trajectory.inputs.is_none() {
            return Err(Error::Parse(format!("{PLAN_FILE} has no input columns")));
        }
        let samples = read_samples_csv(open(SAMPLES_FILE)?)?;
        if samples.len() != trajectory.len() {
            return Err(Error::Shape(format!(
                "{} metric samples for a plan of {} points",
                samples.len(),
                trajectory.len()
            )));
        }
        let s: DesignSummary = serde_json::from_reader(open(DESIGN_FILE)?)?;
        Ok(ControlDesign {
            plan: PlanResult {
                trajectory,
                effort: s.effort,
                terminal_error: s.terminal_error,
                min_clearance: s.min_clearance,
                iterations: s.iterations,
                rounds: s.rounds,
                success: s.success,
            },
            samples,
            chi: s.chi,
            nu: s.nu,
            tube_radius: s.tube_radius,
            replans: s.replans,
        })
    }
}

pub const PLAN_FILE: &str = "plan.csv";
pub const SAMPLES_FILE: &str = "metric_samples.csv";
pub const DESIGN_FILE: &str = "design.json";

/// Plans with the assumed tube only.
pub fn plan_with_tube(
    sys: &dyn DynamicalSystem,
    cfg: &ControlConfig,
    tube: f64,
    warm_start: Option<&[DVector<f64>]>,
) -> Result<PlanResult> {
    let (x0, goal) = cfg.states(sys)?;
    let pc = PlannerConfig {
        tube_radius: tube,
        ..cfg.planner.clone()
    };
    plan_nominal_best(sys, &x0, &goal, &cfg.obstacles, &pc, warm_start)
}

/// Plans around obstacles inflated by the assumed tube, synthesizes the
/// controller metric along the plan, and replans (warm-started) with the
/// synthesized tube whenever the plan does not clear it.
pub fn design_controller(sys: &dyn DynamicalSystem, cfg: &ControlConfig) -> Result<ControlDesign> {
    let mut tube = cfg.tube_guess;
    let mut plan = plan_with_tube(sys, cfg, tube, None)?;
    let mut replans = 0;
    loop {
        if !plan.success {
            return Err(Error::PlanningFailed(format!(
                "terminal error {:.4e}, min clearance {:.4e} with tube {tube:.4}",
                plan.terminal_error, plan.min_clearance
            )));
        }
        let (point, samples) = solve_at(&plan.trajectory, sys, cfg.alpha, &cfg.cvstem())?;
        let samples = samples.ok_or_else(|| Error::Solver(format!("controller problem at alpha={}: {}", cfg.alpha, point.status)))?;
        let r = tube_radius(cfg.dbar, point.chi, cfg.alpha)?;
        let clearance = plan.min_clearance + tube - r;
        log::info!(
            "controller metric: chi {:.4} nu {:.4} tube {r:.4}, plan clearance against it {clearance:.4}",
            point.chi,
            point.nu
        );
        if clearance >= 0.0 || replans >= cfg.max_replans {
            if clearance < 0.0 {
                return Err(Error::PlanningFailed(format!(
                    "plan clears the synthesized tube {r:.4} only by {clearance:.4e} after {replans} replans"
                )));
            }
            plan.min_clearance = clearance;
            return Ok(ControlDesign {
                plan,
                samples,
                chi: point.chi,
                nu: point.nu,
                tube_radius: r,
                replans,
            });
        }
        replans += 1;
        tube = r;
        let warm = plan.trajectory.inputs.clone();
        plan = plan_with_tube(sys, cfg, tube, warm.as_deref())?;
    }
}

pub fn control_options(cfg: &ControlConfig, design: &ControlDesign) -> SimulateControlOptions {
    SimulateControlOptions {
        substeps: cfg.substeps,
        tube_radius: design.tube_radius,
        transient: cfg.transient,
        obstacles: cfg.obstacles.clone(),
        position: cfg.planner.position,
    }
}

/// Tracks the designed plan under the seed's disturbance (stream 2).
pub fn run_control(
    sys: &dyn DynamicalSystem,
    cfg: &ControlConfig,
    design: &ControlDesign,
    method: ControllerMethod,
    model: Option<&DeepLstmModel>,
    seed: u64,
) -> Result<ControlRun> {
    let (lo, hi) = (cfg.planner.input_lower, cfg.planner.input_upper);
    let mut ctrl: Box<dyn Controller> = match method {
        ControllerMethod::Cvstem => Box::new(MetricTracking {
            source: Box::new(SampledMetric::new(&design.samples)?),
            input_bounds: Some((lo, hi)),
        }),
        ControllerMethod::Ncm => {
            let model = model.ok_or_else(|| Error::Config("the ncm controller needs a trained model".into()))?;
            if model.state_dim != sys.state_dim() {
                return Err(Error::Shape(format!(
                    "model state dimension {} but system has {}",
                    model.state_dim,
                    sys.state_dim()
                )));
            }
            Box::new(MetricTracking {
                source: Box::new(NcmMetric::new(model.clone())),
                input_bounds: Some((lo, hi)),
            })
        }
        ControllerMethod::Lqr => {
            let n = sys.state_dim();
            let m = sys.input_dim();
            Box::new(LqrTracking::new(DMatrix::identity(n, n) * cfg.lqr_q, DMatrix::identity(m, m) * cfg.lqr_r).with_bounds(lo, hi))
        }
    };
    let steps = design.plan.trajectory.steps();
    let d = disturbance_sequence(sys.disturbance_dim(), steps, cfg.dbar, seed, 2);
    simulate_control(sys, &design.plan.trajectory, ctrl.as_mut(), &d, &control_options(cfg, design))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_lorenz;

    #[test]
    fn disturbances_have_the_stated_norm_and_are_reproducible() {
        let a = disturbance_sequence(3, 50, 2.5, 7, 0);
        let b = disturbance_sequence(3, 50, 2.5, 7, 0);
        let c = disturbance_sequence(3, 50, 2.5, 7, 1);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for v in &a {
            assert!((v.norm() - 2.5).abs() < 1e-12);
        }
        assert!(disturbance_sequence(2, 4, 0.0, 1, 0).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn initial_conditions_stay_in_the_box() {
        let xs = sample_initial_conditions(200, &[-10.0, -10.0, -10.0], &[10.0, 10.0, 10.0], 3).unwrap();
        assert!(xs.iter().flat_map(|x| x.iter()).all(|v| (-10.0..10.0).contains(v)));
        assert!(sample_initial_conditions(1, &[1.0], &[0.0], 0).is_err());
    }

    #[test]
    fn scenario_plant_matches_simulation_plant() {
        let sys = make_lorenz();
        let cfg = EstimationConfig {
            steps: 20,
            ..EstimationConfig::default()
        };
        let sc = estimation_scenario(&sys, &cfg, 4).unwrap();
        let ekf = run_estimation(
            &sys,
            &cfg,
            &sc,
            &EstimatorDesign {
                line_search: LineSearchResult {
                    alpha_star: 1.0,
                    j_star: 0.0,
                    samples: Vec::new(),
                    curve: Vec::new(),
                },
                bound: EstimationBound {
                    chi: 1.0,
                    nu: 1.0,
                    gamma: 1.0,
                    d1: 1.0,
                    bbar: 1.0,
                    d2: 1.0,
                    cbar: 1.0,
                    gbar: 1.0,
                },
            },
            EstimatorMethod::Ekf,
            None,
        )
        .unwrap();
        for (a, b) in sc.plant.states.iter().zip(&ekf.states) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [EstimatorMethod::Ncm, EstimatorMethod::Cvstem, EstimatorMethod::Ekf] {
            assert_eq!(m.to_string().parse::<EstimatorMethod>().unwrap(), m);
        }
        for m in [ControllerMethod::Ncm, ControllerMethod::Cvstem, ControllerMethod::Lqr] {
            assert_eq!(m.to_string().parse::<ControllerMethod>().unwrap(), m);
        }
        assert!("kalman".parse::<EstimatorMethod>().is_err());
    }
}
