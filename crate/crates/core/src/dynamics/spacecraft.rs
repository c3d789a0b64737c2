use nalgebra::{DMatrix, DVector};

use super::{ChannelBounds, DynamicalSystem};

/// One body-fixed unidirectional thruster: mounting point and unit force
/// direction, both in body coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thruster {
    pub position: [f64; 2],
    pub direction: [f64; 2],
}

impl Thruster {
    /// z-component of `r × F` for unit thrust.
    pub fn torque(&self) -> f64 {
        self.position[0] * self.direction[1] - self.position[1] * self.direction[0]
    }
}

/// Eight thrusters on a unit square, two per face, mounted at the corners
/// and firing along the face so that each pair gives pure force when fired
/// together and pure torque when fired differentially (lever arm 0.5).
pub fn thruster_layout() -> [Thruster; 8] {
    let t = |px: f64, py: f64, dx: f64, dy: f64| Thruster {
        position: [px, py],
        direction: [dx, dy],
    };
    [
        // rear face, pushing +x
        t(-0.5, 0.5, 1.0, 0.0),
        t(-0.5, -0.5, 1.0, 0.0),
        // front face, pushing -x
        t(0.5, 0.5, -1.0, 0.0),
        t(0.5, -0.5, -1.0, 0.0),
        // bottom face, pushing +y
        t(0.5, -0.5, 0.0, 1.0),
        t(-0.5, -0.5, 0.0, 1.0),
        // top face, pushing -y
        t(0.5, 0.5, 0.0, -1.0),
        t(-0.5, 0.5, 0.0, -1.0),
    ]
}

/// Planar spacecraft `ẋ = Ax + B(x)u + d` with
/// `x = [p_x, p_y, φ, ṗ_x, ṗ_y, φ̇]`, unit mass and inertia and eight
/// thrusters with `0 ≤ uᵢ ≤ 1`.
#[derive(Debug, Clone)]
pub struct Spacecraft {
    pub thrusters: [Thruster; 8],
    pub bounds: ChannelBounds,
    a: DMatrix<f64>,
}

pub fn make_spacecraft() -> Spacecraft {
    let mut a = DMatrix::zeros(6, 6);
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    Spacecraft {
        thrusters: thruster_layout(),
        bounds: ChannelBounds {
            d1: 0.15,
            d2: 0.0,
            d: 0.15,
            b: 1.0,
            b2: 1.0,
            c: 1.0,
            g: 1.0,
        },
        a,
    }
}

impl Spacecraft {
    pub fn drift_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    fn actuation(&self, phi: f64, derivative: bool) -> DMatrix<f64> {
        let (s, c) = phi.sin_cos();
        let mut b = DMatrix::zeros(6, 8);
        for (j, th) in self.thrusters.iter().enumerate() {
            let [dx, dy] = th.direction;
            if derivative {
                b[(3, j)] = -s * dx - c * dy;
                b[(4, j)] = c * dx - s * dy;
            } else {
                b[(3, j)] = c * dx - s * dy;
                b[(4, j)] = s * dx + c * dy;
                b[(5, j)] = th.torque();
            }
        }
        b
    }
}

impl DynamicalSystem for Spacecraft {
    fn name(&self) -> &str {
        "spacecraft"
    }
    fn state_dim(&self) -> usize {
        6
    }
    fn input_dim(&self) -> usize {
        8
    }
    fn output_dim(&self) -> usize {
        6
    }
    fn disturbance_dim(&self) -> usize {
        6
    }
    fn noise_dim(&self) -> usize {
        6
    }

    fn f(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.a * x
    }

    fn jacobian(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.a.clone()
    }

    fn h(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        x.clone()
    }

    fn output_jacobian(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(6, 6)
    }

    fn input_matrix(&self, x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.actuation(x[2], false)
    }

    fn disturbance_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(6, 6)
    }

    fn noise_matrix(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(6, 6)
    }

    fn bounds(&self) -> ChannelBounds {
        self.bounds
    }

    fn sdc_matrix(&self, _x: &DVector<f64>, _t: f64) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn input_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(6, 6);
        out.set_column(2, &(self.actuation(x[2], true) * u));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_is_double_integrator() {
        let sc = make_spacecraft();
        let a = sc.jacobian(&DVector::zeros(6), 0.0);
        let nz: Vec<_> = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .filter(|&(i, j)| a[(i, j)] != 0.0)
            .collect();
        assert_eq!(nz, vec![(0, 3), (1, 4), (2, 5)]);
        assert!(nz.iter().all(|&(i, j)| a[(i, j)] == 1.0));
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(sc.f(&x, 0.0), DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn actuation_columns_bounded() {
        let sc = make_spacecraft();
        let b = sc.input_matrix(&DVector::zeros(6), 0.0);
        for j in 0..8 {
            assert!(b.column(j).norm() <= (1.0f64 + 0.25).sqrt() + 1e-15);
        }
        // rank 3: every force/torque direction is reachable
        assert_eq!(b.rows(3, 3).rank(1e-9), 3);
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let sc = make_spacecraft();
        let x = DVector::from_vec(vec![1.0, 2.0, 0.7, 0.1, -0.2, 0.3]);
        let u = DVector::from_vec(vec![0.1, 0.5, 0.0, 0.2, 0.9, 0.3, 0.4, 0.0]);
        let analytic = sc.input_jacobian(&x, &u, 0.0);
        let fd = super::super::finite_difference_jacobian(|z| sc.input_matrix(z, 0.0) * &u, &x, 1e-6);
        assert!((analytic - fd).norm() < 1e-8);
    }
}
