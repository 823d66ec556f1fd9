//! Error type shared across the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A schema or parameter invariant was violated.
    #[error("invalid schema: {0}")]
    Schema(String),

    /// Secret keys must be at least 16 bytes.
    #[error("secret key too short: {len} bytes (minimum 16)")]
    KeyTooShort { len: usize },

    /// The key text was not valid lowercase hexadecimal.
    #[error("invalid hex key: {0}")]
    InvalidHexKey(String),

    /// A value does not fit in the column's word width.
    #[error("value {value} does not fit in {width_bits} bits")]
    Overflow { value: String, width_bits: u32 },

    /// A value has more fractional digits than the column's scale retains.
    #[error("value {value} is not integral at scale {scale}")]
    NonIntegral { value: String, scale: u32 },

    /// A cell (or primary key) could not be parsed as a number.
    #[error("cannot parse {text:?} as a number")]
    InvalidNumber { text: String },

    /// A CSV cell failed to ingest; coordinates are 1-based data rows.
    #[error("row {row}, column {column:?}: {detail}")]
    Cell {
        row: usize,
        column: String,
        detail: String,
    },

    /// Two rows share a primary key value.
    #[error("duplicate primary key {key:?}")]
    DuplicatePrimaryKey { key: String },

    /// The CSV header does not match the schema.
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    /// Experiment configuration out of range.
    #[error("invalid experiment config: {0}")]
    ExperimentConfig(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid config json: {0}")]
    ConfigJson(String),
}
