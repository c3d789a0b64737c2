//! Online use of contraction metrics: estimators, tracking controllers,
//! baselines, the nominal planner and the closed-loop simulators.

mod control;
mod estimation;
mod lqr;
mod planner;
mod smoothing;
mod source;

pub use control::{
    simulate_control_from,
    ncm_controller, simulate_control, ControlRun, Controller, LqrTracking, MetricTracking, SimulateControlOptions,
};
pub use estimation::{
    ekf_estimator, ncm_estimator_step, simulate_estimation, Ekf, EstimationBound, EstimationRun, Estimator,
    MetricEstimator,
};
pub use lqr::{care_residual, lqr_gain};
pub use planner::{plan_nominal, plan_nominal_best, Obstacle, PlanResult, PlannerConfig};
pub use smoothing::moving_average;
pub use source::{ConstantMetric, MetricSource, NcmMetric, SampledMetric};
