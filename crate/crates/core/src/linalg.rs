//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// `A + Aᵀ`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    a + a.transpose()
}

/// Replaces `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn eigenvalues_sym(a: &DMatrix<f64>) -> DVector<f64> {
    let mut s = a.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    eigenvalues_sym(a).min()
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    eigenvalues_sym(a).max()
}

/// Induced 2-norm.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Positive definiteness with the relative floor `λ_min > 1e-12·‖M‖`.
pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return false;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let eig = eigenvalues_sym(a);
    let scale = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    eig.min() > 1e-12 * scale
}

pub fn require_square(a: &DMatrix<f64>, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Solves the Lyapunov equation `AᵀX + XA + Q = 0` through its Kronecker
/// form. Intended for the small state dimensions used here (n ≲ 12).
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = require_square(a, "A")?;
    if q.shape() != (n, n) {
        return Err(Error::Shape("Q must match A".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AᵀX) = (I ⊗ Aᵀ) vec X,  vec(XA) = (Aᵀ ⊗ I) vec X  (column-major vec)
    let op = eye.kronecker(&a.transpose()) + a.transpose().kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular Lyapunov operator".into()))?;
    let mut x = DMatrix::from_column_slice(n, n, sol.as_slice());
    symmetrize(&mut x);
    Ok(x)
}

/// Hurwitz test through the eigenvalues of a general real matrix.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|z| z.re < 0.0)
}

/// Formats with 17 significant digits (round-trips every `f64`).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let q = DMatrix::identity(2, 2);
        let x = solve_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &x + &x * &a + &q;
        assert!(res.norm() < 1e-12);
        assert!(is_positive_definite(&x));
    }

    #[test]
    fn pd_floor_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(!is_positive_definite(&a));
        assert!(is_positive_definite(&DMatrix::identity(3, 3)));
    }
}
