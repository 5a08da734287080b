//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible (matrix product, distance, ...).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An allocation would exceed the configured dimension ceiling.
    #[error("dimension ceiling exceeded: {needed} entries > ceiling {ceiling}")]
    DimensionCeiling { needed: u128, ceiling: usize },

    /// A precondition on an argument does not hold.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A diagram is malformed (cycle, dangling port, type mismatch, ...).
    #[error("malformed diagram: {0}")]
    Diagram(String),

    /// A strategy violates the model invariants.
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    /// A serialized artifact does not match its schema.
    #[error("schema violation: {0}")]
    Schema(String),

    /// A numeric routine failed (non-finite values, lost normalization, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
