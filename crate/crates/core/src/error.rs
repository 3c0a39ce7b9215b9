use thiserror::Error;

/// Errors produced anywhere in the compile / evaluate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid piecewise-affine function: {0}")]
    InvalidPwa(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("non-finite input at position {0}")]
    NonFinite(usize),

    #[error("input lies outside every region")]
    OutOfDomain,

    #[error("domain is unbounded; supply an explicit domain box (domain_box in the PWA file)")]
    UnboundedDomain,

    #[error("domain polytope is empty")]
    InfeasibleDomain,

    #[error("LP solver exceeded {limit} iterations ({rows} rows, {cols} columns, phase {phase})")]
    IterationLimit {
        limit: usize,
        rows: usize,
        cols: usize,
        phase: u8,
    },

    #[error("generator failed: {0}")]
    Generator(String),

    #[error("cross-method mismatch: {0}")]
    Mismatch(String),

    #[error("network has no structure descriptor")]
    MissingStructure,

    #[error("closed-loop constraint violated at step {step}: {kind}")]
    StrictViolation { step: usize, kind: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
