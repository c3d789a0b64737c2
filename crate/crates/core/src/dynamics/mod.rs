//! Dynamical systems and fixed-step integration.
//!
//! A [`DynamicalSystem`] bundles everything the metric synthesis and the
//! online runtime need about one model:
//!
//! ```text
//! ẋ = f(x,t) + B₁(x,t) u + B(x,t) d₁,      y = h(x,t) + G(x,t) d₂
//! ```
//!
//! together with the Jacobians `A = ∂f/∂x`, `C = ∂h/∂x` and the sup-norm
//! bounds of the disturbance channels.

mod integrate;
mod linear;
mod lorenz;
mod spacecraft;
mod trajectory;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use integrate::{integrate, integrate_with, rk4_step, IntegrateOptions};
pub use linear::{make_linear_test, LinearSystem};
pub use lorenz::{make_lorenz, Lorenz};
pub use spacecraft::{make_spacecraft, thruster_layout, Spacecraft, Thruster};
pub use trajectory::Trajectory;

/// Sup-norm bounds used by the steady-state objectives.
///
/// `d1`/`d2` bound the process and measurement disturbances of the estimation
/// problem, `d` the disturbance of the control problem, and `b`, `b2`, `c`,
/// `g` bound `‖B‖`, `‖B₂‖`, `‖C‖`, `‖G‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBounds {
    pub d1: f64,
    pub d2: f64,
    pub d: f64,
    pub b: f64,
    pub b2: f64,
    pub c: f64,
    pub g: f64,
}

impl Default for ChannelBounds {
    fn default() -> Self {
        ChannelBounds {
            d1: 1.0,
            d2: 1.0,
            d: 1.0,
            b: 1.0,
            b2: 1.0,
            c: 1.0,
            g: 1.0,
        }
    }
}

pub trait DynamicalSystem: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    /// Number of control inputs (0 for autonomous systems).
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Columns of the process-disturbance channel `B`.
    fn disturbance_dim(&self) -> usize;
    /// Columns of the measurement-disturbance channel `G`.
    fn noise_dim(&self) -> usize;

    /// Drift `f(x,t)`.
    fn f(&self, x: &DVector<f64>, t: f64) -> DVector<f64>;
    /// `A(x,t) = ∂f/∂x`.
    fn jacobian(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64>;
    fn h(&self, x: &DVector<f64>, t: f64) -> DVector<f64>;
    /// `C(x,t) = ∂h/∂x`.
    fn output_jacobian(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64>;
    /// Actuation matrix `B₁(x,t)`, `n×m`.
    fn input_matrix(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64>;
    /// Process-disturbance channel `B(x,t)` (also `B₂` in the control setting).
    fn disturbance_matrix(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64>;
    /// Measurement-disturbance channel `G(x,t)`.
    fn noise_matrix(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64>;
    fn bounds(&self) -> ChannelBounds;

    /// State-dependent coefficient form `A(x,t)` with `A(x,t)x = f(x,t)`.
    /// Systems without a shipped factorization return `None`.
    fn sdc_matrix(&self, _x: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        None
    }

    /// `∂(B₁(x,t)u)/∂x`. The default uses central differences.
    fn input_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut out = DMatrix::zeros(n, n);
        if u.is_empty() {
            return out;
        }
        let step = 1e-6;
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let col = (self.input_matrix(&xp, t) * u - self.input_matrix(&xm, t) * u) / (2.0 * step);
            out.set_column(j, &col);
        }
        out
    }

    /// Closed-loop field `f + B₁u + Bd`. Empty `u`/`d` are treated as zero.
    fn field(&self, x: &DVector<f64>, t: f64, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut dx = self.f(x, t);
        if !u.is_empty() {
            dx += self.input_matrix(x, t) * u;
        }
        if !d.is_empty() {
            dx += self.disturbance_matrix(x, t) * d;
        }
        dx
    }
}

/// Central-difference Jacobian of `g` at `x`.
pub fn finite_difference_jacobian<F>(g: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let y0 = g(x);
    let mut out = DMatrix::zeros(y0.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        out.set_column(j, &((g(&xp) - g(&xm)) / (2.0 * step)));
    }
    out
}

/// Builds a system by name: `lorenz`, `spacecraft` or `linear:<a>`.
pub fn system_by_name(name: &str) -> crate::Result<Box<dyn DynamicalSystem>> {
    match name {
        "lorenz" => Ok(Box::new(make_lorenz())),
        "spacecraft" => Ok(Box::new(make_spacecraft())),
        other => {
            if let Some(a) = other.strip_prefix("linear:") {
                let a: f64 = a
                    .trim()
                    .parse()
                    .map_err(|_| crate::Error::Config(format!("bad linear coefficient in '{other}'")))?;
                Ok(Box::new(make_linear_test(a)))
            } else {
                Err(crate::Error::Config(format!(
                    "unknown system '{other}' (expected lorenz, spacecraft or linear:<a>)"
                )))
            }
        }
    }
}
