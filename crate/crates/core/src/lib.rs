// `!(a <= b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the maths over limbs, axes and rows.
#![allow(clippy::needless_range_loop)]

pub mod check;
pub mod compliance;
pub mod error;
pub mod force;
pub mod io;
pub mod kinematics;
pub mod pipeline;
pub mod posture;
pub mod region;
pub mod robot;
pub mod scenario;
pub mod sweep;
