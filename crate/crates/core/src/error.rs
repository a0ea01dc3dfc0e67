use alloc::string::String;

/// Failure kinds shared by every module of the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty context: attention over zero selected tokens")]
    EmptyContext,
    #[error("degenerate vector: zero norm")]
    DegenerateVector,
    #[error("budget error: asked for {k} tokens out of {available}")]
    Budget { k: usize, available: usize },
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("sequencing error: expected segment {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("no valid cross-clip frame pairs")]
    NoValidPairs,
    #[error("group size {0} is below 2")]
    GroupSize(usize),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
