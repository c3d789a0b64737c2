use super::problem::SdpProblem;
use super::solver::SdpSolution;
use crate::linalg::min_eigenvalue;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BlockResidual {
    pub label: String,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub blocks: Vec<BlockResidual>,
    pub objective: f64,
    pub min_eigenvalue: f64,
}

impl CheckReport {
    /// Blocks whose smallest eigenvalue is below `-tol`.
    pub fn violated(&self, tol: f64) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.min_eigenvalue < -tol)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Re-evaluates every block at the solution point with a symmetric
/// eigendecomposition.
pub fn check_solution(p: &SdpProblem, s: &SdpSolution) -> Result<CheckReport> {
    check_point(p, &s.y)
}

pub fn check_point(p: &SdpProblem, y: &[f64]) -> Result<CheckReport> {
    if y.len() != p.num_vars() {
        return Err(Error::Shape(format!(
            "solution has {} variables, problem has {}",
            y.len(),
            p.num_vars()
        )));
    }
    let blocks: Vec<BlockResidual> = p
        .blocks()
        .iter()
        .map(|b| BlockResidual {
            label: b.label.clone(),
            min_eigenvalue: min_eigenvalue(&b.evaluate(y)),
        })
        .collect();
    let objective = p.objective_vector().iter().zip(y).map(|(c, v)| c * v).sum();
    let min_eigenvalue = blocks.iter().map(|b| b.min_eigenvalue).fold(f64::INFINITY, f64::min);
    Ok(CheckReport {
        blocks,
        objective,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::LmiBlock;
    use nalgebra::DMatrix;

    fn interval_problem() -> SdpProblem {
        let mut p = SdpProblem::new();
        let x = p.add_scalar("x");
        let z = p.add_scalar("z");
        p.bound_scalar(x, Some(1.0), Some(3.0));
        let mut b = LmiBlock::new("z >= x", 1);
        b.add_scalar(z, &DMatrix::from_element(1, 1, 1.0));
        b.add_scalar(x, &DMatrix::from_element(1, 1, -1.0));
        p.push(b);
        p.minimize(z, 1.0);
        p
    }

    #[test]
    fn feasible_point_has_nonnegative_residuals() {
        let p = interval_problem();
        let r = check_point(&p, &[2.0, 2.5]).unwrap();
        assert!(r.min_eigenvalue >= 0.0);
        assert_eq!(r.objective, 2.5);
    }

    #[test]
    fn violation_lands_on_the_right_block() {
        let p = interval_problem();
        let r = check_point(&p, &[2.0, 1.5]).unwrap();
        assert_eq!(r.violated(0.0), vec![p.blocks().len() - 1]);
        let r = check_point(&p, &[3.5, 4.0]).unwrap();
        let v = r.violated(0.0);
        assert_eq!(v.len(), 1);
        assert!(p.blocks()[v[0]].label.contains("upper") || p.blocks()[v[0]].label.contains("<="));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = interval_problem();
        assert!(matches!(check_point(&p, &[1.0]), Err(Error::Shape(_))));
    }
}
