//! Signer-aware dataset curation and sign-language detection.
//!
//! The pipeline identifies signers by clustering face embeddings, audits and
//! removes signer overlap between train/dev/test partitions, and trains a
//! small pose-based LSTM detector to measure how overlap inflates accuracy.

pub mod clustering;
pub mod data;
pub mod detector;
pub mod error;
pub mod features;
pub mod partition;
pub mod seed;

pub use error::{Error, Result};
