use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("cross-entropy over an all-masked sequence")]
    AllMasked,

    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("token id {0} out of vocabulary range")]
    TokenOutOfRange(u32),

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("sequence length {len} exceeds budget {max}")]
    BudgetExceeded { len: usize, max: usize },

    #[error("infeasible task: {0}")]
    Infeasible(String),

    #[error("parse error at line {line}: {msg}")]
    LineParse { line: usize, msg: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("numeric abort: {0}")]
    NumericAbort(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
