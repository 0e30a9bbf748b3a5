use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout error: {0}")]
    Layout(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("singular phase at register values {values:?}")]
    Singularity { values: Vec<i64> },
    #[error("impossible post-selection on qubit {qubit}: outcome probability {probability:e}")]
    ImpossiblePostSelection { qubit: usize, probability: f64 },
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("invalid quantum numbers: {0}")]
    QuantumNumbers(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("signal cannot be resolved: {0}")]
    Unresolvable(String),
    #[error("dense dimension {dim} exceeds threshold {threshold}")]
    DenseThreshold { dim: usize, threshold: usize },
    #[error("emulation ceiling exceeded: {qubits} qubits requested, ceiling {ceiling}")]
    Ceiling { qubits: usize, ceiling: usize },
    #[error("malformed file {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
