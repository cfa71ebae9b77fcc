//! Instrument for tracking representation formation in small transformers:
//! train decoder-only models on synthetic corpora and record coordinated
//! spectral, geometric, linguistic, and information-theoretic signals across
//! dense checkpoints.

pub mod curvature;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernel;
pub mod mi;
pub mod model;
pub mod probing;

pub use error::{Result, TraceError};
