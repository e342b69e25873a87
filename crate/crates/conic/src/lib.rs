//! Convex programs with linear, box and second-order-cone constraints, solved
//! by an interior-point backend, plus a best-first branch-and-bound driver for
//! problems whose binary variables enter linearly.

// `!(a <= b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the maths over limbs, axes and rows.
#![allow(clippy::needless_range_loop)]

pub mod bigm;
pub mod bnb;
pub mod error;
pub mod problem;
pub mod propagate;
pub mod solver;

pub use bigm::{big_m_encode, BigM, BigMEncoding, InsufficientBigM};
pub use bnb::{solve_micp, solve_micp_with, MicpSettings};
pub use error::ConicError;
pub use problem::{Bounds, ConicProblem, LinExpr, Objective, Row, SocConstraint, VarId};
pub use propagate::propagate;
pub use solver::{
    solve_continuous, solve_continuous_with, solve_relaxation, BranchStats, KktResiduals, SolveResult, SolveStats,
    SolverSettings, Status,
};
