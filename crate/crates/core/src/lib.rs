//! Contrastive adaptive debiasing over multi-view logits.
//!
//! Each benchmark record carries candidate logits under four views (question
//! only, context, image, everything). [`engine`] turns them into a debiased
//! decision; the remaining modules evaluate, diagnose, tune and simulate.

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod io;
pub mod metrics;
pub mod regression;
pub mod synthgen;
pub mod tuner;

#[cfg(test)]
mod fixtures;

pub use error::{CadeError, Result};
