use thiserror::Error;

/// Failures raised by the estimators, generators and I/O layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("degenerate proposal: {0}")]
    DegenerateProposal(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    /// The envelope rejection loop failed to accept a draw.
    #[error("sampler stuck after {0} consecutive envelope rejections")]
    StuckSampler(usize),

    #[error("invalid pilot run: {0}")]
    InvalidPilot(String),

    #[error("line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for SvError {
    fn from(e: std::io::Error) -> Self {
        SvError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SvError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SvError {
    SvError::InvalidInput(msg.into())
}
