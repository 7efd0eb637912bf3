use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sample source exhausted before producing a point")]
    SamplerExhausted,

    #[error("slice {{‖y‖_p ≤ 1, ‖y‖_2 = ρ}} is empty: ρ = {rho} ≥ sup ‖y‖_2/‖y‖_p = {sup_ratio}")]
    Infeasible { rho: f64, sup_ratio: f64 },

    #[error("retries exhausted after {attempts} attempts")]
    RetriesExhausted { attempts: usize },

    #[error("generators are linearly dependent over GF(2)")]
    DependentGenerators,

    #[error("internal verification failed: {0}")]
    Verification(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(name: &'static str, reason: impl Into<String>) -> Error {
    Error::OutOfRange {
        name,
        reason: reason.into(),
    }
}
