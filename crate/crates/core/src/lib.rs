//! Cross-domain recommendation with semantic item clusters and debiased
//! user-cluster propagation.

pub mod archive;
pub mod dataio;
pub mod engine;
pub mod error;
pub mod eval;
pub mod graphs;
pub mod model;
pub mod pipeline;
pub mod semantics;
pub mod synth;

pub use error::{Error, Result};
