use nalgebra::{DMatrix, DVector};

use super::{ChannelBounds, DynamicalSystem};

/// Linear time-invariant system `ẋ = Ax + Bu + d`, `y = Cx + d₂`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub bounds: ChannelBounds,
    name: String,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "A must be square");
        assert_eq!(b.nrows(), a.nrows(), "B rows must match A");
        assert_eq!(c.ncols(), a.nrows(), "C columns must match A");
        LinearSystem {
            a,
            b,
            c,
            bounds: ChannelBounds::default(),
            name: "linear".into(),
        }
    }

    pub fn with_bounds(mut self, bounds: ChannelBounds) -> Self {
        self.bounds = bounds;
        self
    }

    /// One-dimensional double integrator `p̈ = u` with position output.
    pub fn double_integrator() -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let mut sys = LinearSystem::new(a, b, c);
        sys.name = "double-integrator".into();
        sys
    }
}

/// Scalar test system `ẋ = a·x + u + d` with full-state measurement and
/// unit channel matrices.
pub fn make_linear_test(a: f64) -> LinearSystem {
    let one = DMatrix::from_element(1, 1, 1.0);
    let mut sys = LinearSystem::new(DMatrix::from_element(1, 1, a), one.clone(), one);
    sys.name = format!("linear:{a}");
    sys
}

impl DynamicalSystem for LinearSystem {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn output_dim(&self) -> usize {
        self.c.nrows()
    }
    fn disturbance_dim(&self) -> usize {
        self.a.nrows()
    }
    fn noise_dim(&self) -> usize {
        self.c.nrows()
    }
    fn f(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.a * x
    }
    fn jacobian(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.a.clone()
    }
    fn h(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.c * x
    }
    fn output_jacobian(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.c.clone()
    }
    fn input_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.b.clone()
    }
    fn disturbance_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(self.a.nrows(), self.a.nrows())
    }
    fn noise_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(self.c.nrows(), self.c.nrows())
    }
    fn bounds(&self) -> ChannelBounds {
        self.bounds
    }
    fn sdc_matrix(&self, _x: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
    fn input_jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.a.nrows(), self.a.nrows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        let x = DVector::from_element(1, 2.0);
        let s = make_linear_test(-1.0);
        assert_eq!(s.f(&x, 0.0)[0], -2.0);
        assert_eq!(s.jacobian(&x, 0.0), DMatrix::from_element(1, 1, -1.0));
        assert_eq!(make_linear_test(0.5).f(&x, 3.0)[0], 1.0);
    }
}
