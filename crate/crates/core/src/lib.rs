//! Incivility detection toolkit: corpus handling, text processing,
//! feature extraction, neural models and post-hoc analytics.

pub mod classifier;
pub mod conflict;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod features;
pub mod nn;
pub mod posthoc;
pub mod synth;
pub mod tdsa;
pub mod text;

pub use error::{Error, Result};
