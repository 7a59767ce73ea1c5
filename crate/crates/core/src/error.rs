use thiserror::Error;

/// Errors raised across mesh construction, assembly and solution.
#[derive(Debug, Error)]
pub enum CutFemError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("unsupported polynomial order {0} (expected 1 or 2)")]
    UnsupportedOrder(usize),

    #[error("the active mesh carries no degrees of freedom")]
    EmptyDomain,

    #[error("singular system{}: {detail}", pivot.map(|p| format!(" at pivot {p}")).unwrap_or_default())]
    SingularSystem { pivot: Option<usize>, detail: String },

    #[error("linear solve did not reach the residual target: relative residual {residual:.3e}")]
    Residual { residual: f64 },

    #[error("Picard iteration did not converge within {iterations} iterations (last change {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    PicardDivergence { iterations: usize, history: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CutFemError>;
