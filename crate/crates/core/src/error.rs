use thiserror::Error;

use crate::exprparse::ExprError;
use crate::solver::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel `{0}` has no closed-form single-observation estimator")]
    MissingClosedForm(String),

    #[error("family `{0}` has no closed-form estimator")]
    NoClosedForm(String),

    #[error("kernel evaluation is not finite at x={x}, t={t}")]
    NonFinite { x: f64, t: f64 },

    #[error("sign-change search failed: {status:?}")]
    Solver { status: SolveStatus },

    #[error("value {y} lies outside the convex hull of the range")]
    OutOfRange { y: f64 },

    #[error("c*f+d changes sign on the probe set")]
    SignViolation,

    #[error("derivative vanishes numerically at {at}")]
    DegenerateDerivative { at: f64 },

    #[error("anchor probes do not determine a Moebius relation")]
    DegenerateProbes,

    #[error("no witness has theta1 below t={t}")]
    EmptyLowerSet { t: f64 },

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no observations")]
    EmptyData,

    #[error("negative weight at line {line}")]
    NegativeWeight { line: usize },
}
