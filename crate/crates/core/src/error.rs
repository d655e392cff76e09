use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Structural problem with a model, LM, or SCM definition.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A query whose arguments do not fit the model (non-total world, bad root clamp, ...).
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("could not parse input: {0}")]
    Parse(String),

    #[error("impossible evidence: the observed world has probability zero")]
    ImpossibleEvidence,

    #[error("instance too large: {size} worlds exceeds the enumeration cap of {cap}")]
    TooLarge { size: u128, cap: u64 },

    #[error("counterfactual prompt has length {counterfactual} but the factual prompt has length {factual}")]
    LengthMismatch { factual: usize, counterfactual: usize },

    #[error("stable distribution undefined: no admissible mass at position {position}")]
    StableUndefined { position: usize },

    #[error("structural function depends on the exogenous variables")]
    DependsOnExogenous,

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
