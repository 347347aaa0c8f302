//! Lesion-wise deep-ensemble uncertainty and its explanation.
//!
//! The crate turns ensemble probability maps into per-lesion uncertainty
//! (LSU), describes each lesion with interpretable features, and regresses
//! uncertainty on those features to rank what drives it.

pub mod ensemble;
pub mod explainer;
pub mod error;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod novelty;
pub mod pipeline;
pub mod synth;
pub mod tabular;
pub mod volume;

pub use error::{Error, Result};
