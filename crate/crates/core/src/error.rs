use thiserror::Error;

/// Errors raised by model evaluation, quadrature, optimization and diagnosis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FigError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate variance {variance:e} at d = {point:?}")]
    DegenerateVariance { variance: f64, point: Vec<f64> },

    #[error("non-finite value while evaluating {what} at {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },

    #[error("capacity exceeded: {what} needs {requested} entries, cap is {cap}")]
    Capacity {
        what: &'static str,
        requested: u128,
        cap: usize,
    },

    #[error("maxima report is empty")]
    EmptyReport,
}

impl FigError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        FigError::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        FigError::Domain(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FigError::DegenerateVariance { .. }
                | FigError::NonFinite { .. }
                | FigError::Capacity { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, FigError>;
