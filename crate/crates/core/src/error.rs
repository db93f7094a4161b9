use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state space needs at least 2 states, got {0}")]
    TooSmall(usize),

    #[error("every energy equals the minimum; there is no excited state")]
    AllDegenerate,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid proposal matrix: {0}")]
    InvalidProposal(String),

    #[error("transition kernel invariant violated: {0}")]
    KernelInvariant(String),

    #[error("symmetrized kernel constructions disagree by {0:e}")]
    Mismatch(f64),

    #[error("kernel has eigenvalue {0:e} below zero; increase laziness")]
    NegativeEigenvalue(f64),

    #[error("spectral gap is zero")]
    ZeroGap,

    #[error("dimension {got} exceeds the limit {limit} for this backend")]
    DimensionTooLarge { got: usize, limit: usize },

    #[error("unitary completion failed: {0}")]
    CompletionFailure(String),

    #[error("phase register would need p = {0} qubits (limit 24)")]
    RegisterTooWide(u32),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown instance family `{0}`")]
    UnknownFamily(String),

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
