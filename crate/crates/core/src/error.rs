//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ShadowError>;

#[derive(Debug, Error)]
pub enum ShadowError {
    #[error("{n} qubits exceed the dense-dimension cap of {cap}")]
    DimensionCapExceeded { n: usize, cap: usize },

    #[error("Pauli strings have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("the all-identity Pauli string has no shadow-norm bound")]
    IdentityPauli,

    #[error("operator dimensions do not match ({expected} vs {found})")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not a valid quantum state: {0}")]
    InvalidState(String),

    #[error("POVM is not valid: {0}")]
    InvalidPovm(String),

    #[error(
        "frame superoperator is not invertible (min eigenvalue {min_eig:.3e} \
         below relative floor); the POVM is not informationally complete"
    )]
    NotInformationallyComplete { min_eig: f64 },

    #[error("protocol family has no enumerable effect list")]
    NotEnumerable,

    #[error("outcome {outcome} outside the draw's outcome space of size {space}")]
    OutcomeOutOfRange { outcome: usize, space: usize },

    #[error("Born distribution sums to {total} (expected 1 within 1e-8)")]
    NonNormalizedBornDistribution { total: f64 },

    #[error("unknown adversarial rule: {0}")]
    UnknownRule(String),

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("measurement record is empty")]
    EmptyRecord,

    #[error("truncation threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),

    #[error("{name} must be positive, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },

    #[error("failure probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),

    #[error("weighted Pauli sum contains an identity term; decompose it first")]
    IdentityTermPresent,

    #[error("record has {rounds} rounds, fewer than {batches} batches")]
    TooFewRounds { rounds: usize, batches: usize },

    #[error("Kraus operators do not satisfy completeness: {0}")]
    IncompleteKraus(String),

    #[error("input ensemble does not average to the maximally mixed state: {0}")]
    EnsembleNotBalanced(String),

    #[error("record schema {found:?} is not supported (expected {expected:?})")]
    SchemaVersionMismatch { expected: String, found: String },

    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}
