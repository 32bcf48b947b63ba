use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not reach tolerance {tolerance:e} ({what}: error {error:e})")]
    Quadrature {
        what: &'static str,
        tolerance: f64,
        error: f64,
    },

    #[error("positivity violation at step {step}, cell {cell} (Z = {value:e})")]
    Positivity { step: usize, cell: usize, value: f64 },

    #[error("blow-up at step {step}, cell {cell}: |value| = {value:e}")]
    BlowUp { step: usize, cell: usize, value: f64 },

    #[error("degenerate ensemble: ess {ess:.3} out of {paths} paths")]
    DegenerateEnsemble { ess: f64, paths: usize },

    #[error("requested {requested} values, memory budget is {budget}")]
    MemoryBudget { requested: usize, budget: usize },

    #[error("exact enumeration of 2^{sites} configurations is too large (limit 2^{limit}); use asep_simulate")]
    EnumerationTooLarge { sites: usize, limit: usize },

    #[error("polynomial degree {degree} exceeds maximum {max}")]
    DegreeOverflow { degree: usize, max: usize },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("run discarded {discarded} of {total} realizations (limit {limit_pct}%)")]
    ExcessiveDiscards {
        discarded: usize,
        total: usize,
        limit_pct: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numerics of a run (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LabError::Positivity { .. }
                | LabError::BlowUp { .. }
                | LabError::DegenerateEnsemble { .. }
                | LabError::ExcessiveDiscards { .. }
                | LabError::Quadrature { .. }
        )
    }
}
