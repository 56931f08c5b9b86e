use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("mass matrix is singular (det = {0:e})")]
    SingularMassMatrix(f64),
    #[error("reference thrust direction is degenerate at t = {0}")]
    DegenerateReference(f64),
    #[error("gradient reached non-differentiable op `{0}`")]
    NonDifferentiable(&'static str),
    #[error("replay buffer holds {have} sequences, need {need}")]
    NotWarm { have: usize, need: usize },
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("unknown parameter `{name}` for environment `{env}`")]
    UnknownParam { env: &'static str, name: String },
    #[error("unknown reference `{0}`")]
    UnknownReference(String),
    #[error("reference `{reference}` is not available for `{env}`")]
    ReferenceMismatch {
        env: &'static str,
        reference: &'static str,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sequence chaining broken at element {0}")]
    BrokenChain(usize),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("no evaluation records to select from")]
    NoEvalRecords,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::ShapeMismatch {
        op,
        expected: alloc::format!("{}x{}", expected.0, expected.1),
        got: alloc::format!("{}x{}", got.0, got.1),
    }
}
