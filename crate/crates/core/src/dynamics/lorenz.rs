use nalgebra::{DMatrix, DVector};

use super::{ChannelBounds, DynamicalSystem};

/// Lorenz oscillator with additive process noise and a first-coordinate
/// measurement, `ẋ = f(x) + d₁`, `y = x₁ + d₂`.
#[derive(Debug, Clone)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub bounds: ChannelBounds,
}

/// σ = 10, ρ = 28, β = 8/3 with `sup‖d₁‖ = √3`, `sup‖d₂‖ = 1`.
pub fn make_lorenz() -> Lorenz {
    Lorenz {
        sigma: 10.0,
        rho: 28.0,
        beta: 8.0 / 3.0,
        bounds: ChannelBounds {
            d1: 3f64.sqrt(),
            d2: 1.0,
            d: 3f64.sqrt(),
            b: 1.0,
            b2: 1.0,
            c: 1.0,
            g: 1.0,
        },
    }
}

impl DynamicalSystem for Lorenz {
    fn name(&self) -> &str {
        "lorenz"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn disturbance_dim(&self) -> usize {
        3
    }
    fn noise_dim(&self) -> usize {
        1
    }

    fn f(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::from_vec(vec![
            self.sigma * (x[1] - x[0]),
            x[0] * (self.rho - x[2]) - x[1],
            x[0] * x[1] - self.beta * x[2],
        ])
    }

    fn jacobian(&self, x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(3, 3, &[
            -self.sigma,     self.sigma, 0.0,
            self.rho - x[2], -1.0,       -x[0],
            x[1],            x[0],       -self.beta,
        ]);
        a
    }

    fn h(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn output_jacobian(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])
    }

    fn input_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(3, 0)
    }

    fn disturbance_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }

    fn noise_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }

    fn bounds(&self) -> ChannelBounds {
        self.bounds
    }

    fn sdc_matrix(&self, x: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(3, 3, &[
            -self.sigma,     self.sigma, 0.0,
            self.rho - x[2], -1.0,       0.0,
            0.0,             x[0],       -self.beta,
        ]);
        Some(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn origin_is_equilibrium() {
        let sys = make_lorenz();
        assert_eq!(sys.f(&DVector::zeros(3), 0.0), DVector::zeros(3));
    }

    #[test]
    fn field_at_ones() {
        let sys = make_lorenz();
        let v = sys.f(&DVector::from_element(3, 1.0), 0.0);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 26.0);
        assert_relative_eq!(v[2], 1.0 - 8.0 / 3.0, epsilon = 1e-15);
        let a = sys.jacobian(&DVector::from_element(3, 1.0), 0.0);
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![-10.0, 10.0, 0.0]);
    }

    #[test]
    fn sdc_reproduces_field() {
        let sys = make_lorenz();
        let x = DVector::from_vec(vec![1.5, -2.0, 7.0]);
        let a = sys.sdc_matrix(&x, 0.0).unwrap();
        assert_relative_eq!((a * &x - sys.f(&x, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }
}
