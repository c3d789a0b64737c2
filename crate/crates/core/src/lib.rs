//! Optimal contraction metrics for nonlinear estimation and control.
//!
//! The crate covers the whole offline/online pipeline:
//!
//! * [`dynamics`]: system models (Lorenz oscillator, planar spacecraft, LTI
//!   test systems) and fixed-step RK4 integration.
//! * [`sdp`]: a primal-dual interior-point solver for small dense block LMIs.
//! * [`cvstem`]: assembly of the discretized contraction, estimator and
//!   controller LMIs along trajectories, α line search and θ datasets.
//! * [`metric`]: Cholesky packing of metrics and steady-state bound algebra.
//! * [`neural`]: a from-scratch peephole LSTM regressor (the neural
//!   contraction metric) with BPTT training.
//! * [`runtime`]: metric-based estimator and controller, EKF/LQR
//!   baselines, the nominal planner and the closed-loop simulators.
//! * [`experiments`]: the Lorenz estimation and spacecraft tracking setups.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cvstem;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metric;
pub mod neural;
pub mod runtime;
pub mod sdp;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
