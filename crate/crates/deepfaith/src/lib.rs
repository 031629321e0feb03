//! Faithfulness evaluation for feature-attribution explanations, plus a
//! trainable explainer that is optimized directly for faithfulness.
//!
//! The crate is organized around the pipeline:
//! data -> model -> explainers -> metrics -> signals -> explainer net -> bench

pub mod bench;
pub mod data;
pub mod error;
pub mod explain;
pub mod math;
pub mod metrics;
pub mod model;
pub mod net;
pub mod perturb;
pub mod signals;

pub use error::{Error, Result};

/// Scalar type used by the concrete pipeline. The `math` module stays generic
/// over [`math::Scalar`]; everything model-facing is pinned to this alias.
pub type Real = f64;

/// A permutation over `Real`-scored saliency vectors.
pub type Permutation = math::Permutation;
