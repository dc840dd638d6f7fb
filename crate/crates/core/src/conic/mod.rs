//! Generic structured conic subproblem: specification, barrier solver and
//! first-order optimality check.

pub mod kkt;
pub mod solver;
pub mod spec;

pub use kkt::{kkt_report, kkt_residual, KktReport};
pub use solver::{solve, SolveStatus, SolverOptions, SubproblemSolution};
pub use spec::{AffineExpr, Feasibility, InverseSumTerm, LogTerm, Objective, PsdBlock, PsdTerm, QuadCone, SpecError, SubproblemSpec};

#[cfg(test)]
mod tests;
