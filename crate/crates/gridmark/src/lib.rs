//! Fragile watermarking for tabular numeric data.
//!
//! The two low-order bits of every cell carry a keyed watermark grid:
//! column-wise attribute watermarks built by XOR-folding masked values, and
//! row-wise tuple watermarks built from keyed digests. Verification crosses
//! the two families to localize modifications to single cells, and the XOR
//! accumulation is invertible enough to rebuild the original value of one
//! tampered cell per group.
//!
//! Pipeline entry points: [`embed::embed_table`], [`verify::verify_table`],
//! [`recover::recover_table`], and the [`experiment`] harness that measures
//! recovery failure probability over a parameter grid.

pub mod bitcodec;
pub mod crypto;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod grouping;
pub mod model;
pub mod recover;
pub mod tableio;
pub mod verify;

pub use error::{Error, Result};
