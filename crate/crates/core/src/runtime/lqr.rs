use nalgebra::DMatrix;

use crate::linalg::{frobenius, is_hurwitz, solve_lyapunov, symmetrize};
use crate::{Error, Result};

/// `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Riccati("R is singular".into()))?;
    Ok(a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q)
}

/// Stabilizing solution of the continuous algebraic Riccati equation and
/// the gain `K = R⁻¹BᵀP`.
///
/// A Hamiltonian matrix-sign iteration gives an initial `P`; Newton–Kleinman
/// steps then polish it until the residual is below `1e-10·max(1, ‖Q‖)`.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.nrows() != b.ncols() || r.ncols() != b.ncols() {
        return Err(Error::Shape("lqr: inconsistent A, B, Q, R shapes".into()));
    }
    let rinv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("LQR weight R".into()))?
        .inverse();
    let s = b * &rinv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h.clone();
    for _ in 0..100 {
        let zinv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Riccati("Hamiltonian has eigenvalues on the imaginary axis (not stabilizable/detectable)".into()))?;
        // determinant scaling speeds up the early iterations
        let det = z.determinant().abs();
        let c = if det.is_finite() && det > 0.0 { det.powf(-1.0 / (2 * n) as f64) } else { 1.0 };
        let next = (&z * c + zinv / c) * 0.5;
        let change = frobenius(&(&next - &z)) / frobenius(&z).max(1e-300);
        z = next;
        if change < 1e-13 {
            break;
        }
    }
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));
    let svd = lhs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax.max(1e-300)) {
        return Err(Error::Riccati("no stabilizing solution: (A, B) is not stabilizable".into()));
    }
    let mut p = svd.solve(&rhs, 0.0).map_err(|e| Error::Riccati(e.to_string()))?;
    symmetrize(&mut p);

    let tol = 1e-10 * frobenius(q).max(1.0);
    for _ in 0..50 {
        let k = &rinv * b.transpose() * &p;
        let acl = a - b * &k;
        if !is_hurwitz(&acl) {
            return Err(Error::Riccati("closed loop is not stable: (A, B) is not stabilizable".into()));
        }
        let res = frobenius(&care_residual(a, b, q, r, &p)?);
        if res <= tol {
            break;
        }
        let rhs = q + k.transpose() * r * &k;
        let mut next = solve_lyapunov(&acl, &rhs)?;
        symmetrize(&mut next);
        p = next;
    }
    let res = frobenius(&care_residual(a, b, q, r, &p)?);
    if !(res < 1e-8 * frobenius(q).max(1.0)) {
        return Err(Error::Riccati(format!("residual {res:e} after refinement")));
    }
    let k = &rinv * b.transpose() * &p;
    Ok((k, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_integrator() {
        let (k, p) = lqr_gain(&s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((k[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_plant_without_cost() {
        let (k, p) = lqr_gain(&s(-1.0), &s(1.0), &s(0.0), &s(1.0)).unwrap();
        assert!(p[(0, 0)].abs() < 1e-12 && k[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn unstabilizable_is_rejected() {
        assert!(matches!(lqr_gain(&s(1.0), &s(0.0), &s(1.0), &s(1.0)), Err(Error::Riccati(_))));
    }

    #[test]
    fn double_integrator_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2) * 2.4;
        let r = DMatrix::identity(1, 1);
        let (_, p) = lqr_gain(&a, &b, &q, &r).unwrap();
        assert!(frobenius(&care_residual(&a, &b, &q, &r, &p).unwrap()) < 1e-8);
    }
}
