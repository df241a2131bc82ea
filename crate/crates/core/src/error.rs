use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("frame matrix is singular at {point:?} (|det| = {det:e})")]
    SingularFrame { point: Vec<f64>, det: f64 },
    #[error("vector field is not basic: worst transverse residual {residual:e} at {point:?}")]
    NotBasic { residual: f64, point: Vec<f64> },
    #[error("mean curvature not basic on this model (worst residual {0:e})")]
    MeanCurvatureNotBasic(f64),
    #[error("inadmissible suspension matrix: {0}")]
    InadmissibleMatrix(String),
    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),
    #[error("complex or repeated roots: {real} distinct real roots for degree {degree}")]
    NonRealRoots { real: usize, degree: usize },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Math,
    Validation,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Expr(ExprError::Syntax { .. } | ExprError::UnknownFunction { .. })
            | Error::Schema(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Unsupported(_) => ErrorClass::Usage,
            Error::Expr(_)
            | Error::Overflow(_)
            | Error::NonRealRoots { .. } => ErrorClass::Math,
            Error::InvalidModel(_)
            | Error::SingularFrame { .. }
            | Error::NotBasic { .. }
            | Error::MeanCurvatureNotBasic(_)
            | Error::InadmissibleMatrix(_) => ErrorClass::Validation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
