//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("parameter {name} does not apply to forcing variant {variant}")]
    VariantMismatch {
        name: &'static str,
        variant: &'static str,
    },

    #[error("trajectory diverged at t = {t:.6}{}", member.map(|m| format!(" (member {m})")).unwrap_or_default())]
    Divergence { t: f64, member: Option<usize> },

    #[error("time grids do not match: {0}")]
    GridMismatch(&'static str),

    #[error("{0} is empty")]
    EmptyInput(&'static str),

    #[error("negative variance s11 = {0}")]
    NegativeVariance(f64),

    #[error("Newton did not converge after {iterations} iterations (best residual {residual:.3e} at q = {best:?})")]
    NewtonStalled {
        best: [f64; 5],
        residual: f64,
        iterations: usize,
    },

    #[error("Jacobian of the Newton system is singular (residual {residual:.3e})")]
    SingularJacobian { residual: f64 },

    #[error("no saddle-node found: {0}")]
    NoFold(String),

    #[error("continuation lost the branch at c = {c:.6} after {points} accepted points")]
    BranchLost { c: f64, points: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
