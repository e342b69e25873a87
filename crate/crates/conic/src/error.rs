use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("{context} references variable {var} but the problem has {num_vars} variables")]
    VariableOutOfRange {
        context: String,
        var: usize,
        num_vars: usize,
    },
    #[error("quadratic objective is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("continuous solve requested on a problem with {0} binary variables")]
    BinariesPresent(usize),
    #[error("big-M for row {row} needs a finite box on variable {var}")]
    UnboundedBigM { row: usize, var: usize },
    #[error("backend rejected the problem: {0}")]
    Backend(String),
}
