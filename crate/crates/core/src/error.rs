use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid grid spacing h = {h}: {reason}")]
    InvalidSpacing { h: f64, reason: String },

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("grid function does not belong to this grid ({expected} nodes expected, got {got})")]
    GridMismatch { expected: usize, got: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid recognition function: {0}")]
    InvalidRecognition(String),

    #[error("automatic time step requires a coordination recognition function")]
    NotCoordination,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("snapshot payload of {bytes} bytes exceeds the cap of {cap} bytes")]
    SnapshotCap { bytes: u64, cap: u64 },

    #[error("unsupported oracle pairing: {0}")]
    UnsupportedOracle(String),

    #[error("solver blew up at step {step} (t = {time}) in resolution h = {h}")]
    Blowup { step: usize, time: f64, h: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}
