//! Salient time-step selection for gridded time-varying data.

pub mod aggregation;
pub mod cli;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod selector;
pub mod service;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
