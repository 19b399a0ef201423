use thiserror::Error;

use crate::dsl::{EvalError, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },
    #[error("expected dimension {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("point {point:?} is outside the chart")]
    ChartViolation { point: Vec<f64> },
    #[error("tangent vector lies in the zero section (F = {norm:e})")]
    Slit { norm: f64 },
    #[error("not a Minkowski norm: {0}")]
    NotMinkowski(String),
    #[error("fundamental tensor is singular")]
    Singular,
    #[error("degenerate flag (relative denominator {ratio:e})")]
    DegenerateFlag { ratio: f64 },
    #[error("metric is not Berwald (residual {residual:e})")]
    NotBerwald { residual: f64 },
    #[error("curve left the chart at t = {t}")]
    ChartExit { t: f64 },
    #[error("step size collapsed at t = {t}")]
    StepSizeCollapse { t: f64 },
    #[error("no convergence (best residual {best_residual:e})")]
    Nonconvergence { best_residual: f64 },
    #[error("window [{start}, {end}] does not cover the requested horizon {horizon}")]
    WindowTooShort { start: f64, end: f64, horizon: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Numerical failures, as opposed to bad input.
    pub fn is_nonconvergence(&self) -> bool {
        matches!(
            self,
            Error::Nonconvergence { .. } | Error::StepSizeCollapse { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
