use thiserror::Error;

#[derive(Error, Debug)]
pub enum BctmError {
    #[error("invalid interval: lower bound {lo} must be below upper bound {hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("need at least {required} basis functions for degree {degree}, got {requested}")]
    TooFewBasisFunctions {
        requested: usize,
        required: usize,
        degree: usize,
    },

    #[error("row count mismatch: {left} vs {right}")]
    RowMismatch { left: usize, right: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown covariate column `{0}`")]
    UnknownCovariate(String),

    #[error("covariate column `{column}` has the wrong type: expected {expected}")]
    CovariateType { column: String, expected: &'static str },

    #[error("invalid model specification: {0}")]
    InvalidModel(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scale elicitation did not converge after {steps} bisection steps")]
    ElicitationFailed { steps: usize },

    #[error("sampler aborted: {divergent} of {total} post-warmup transitions diverged")]
    DivergenceAbort { divergent: usize, total: usize },

    #[error("posterior draws are empty")]
    EmptyDraws,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, BctmError>;
