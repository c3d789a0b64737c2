//! Small-scale semidefinite programming over block LMIs.
//!
//! Problems are described as a linear objective over scalar decision
//! variables subject to blocks `F(y) = F₀ + Σⱼ yⱼFⱼ ⪰ 0`, where the decision
//! vector `y` stacks named scalars and families of symmetric matrix
//! variables (isometric upper-triangular coordinates, off-diagonals scaled
//! by √2). [`solve`] runs primal-dual path following twice: first on a
//! slack-augmented problem to find a strictly feasible point, then on the
//! problem itself. Both phases share a Newton system with banded-plus-border
//! structure. [`check_solution`] re-evaluates a solution independently of
//! the solver.

mod arrow;
mod check;
mod problem;
mod solver;

pub use check::{check_solution, BlockResidual, CheckReport};
pub use problem::{
    mat_to_svec, svec_basis, svec_len, svec_to_mat, LmiBlock, MatrixFamily, MatrixVar, ScalarVar, SdpProblem,
};
pub use solver::{solve, solve_with, SdpSolution, SolveStatus, SolverOptions};
