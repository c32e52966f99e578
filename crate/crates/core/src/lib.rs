//! Multi-label image classification with a dual encoder trained by a
//! tempered-sigmoid binary cross entropy.
//!
//! Modules, bottom up:
//! - [`gradcore`]: reverse-mode autodiff over dense matrices
//! - [`loss`]: the fused positive-weighted tempered BCE
//! - [`model`]: image/text encoders, joint embedding, scaled cosine logits
//! - [`metrics`]: AP, macro/weighted mAP, GAP, GAP@K
//! - [`data`]: labels, annotation consolidation, hierarchy, splits, synthetic data
//! - [`trainer`]: AdamW, the training loop, temperature sweeps
//! - [`inference`]: scoring, zero-shot, pair-softmax baseline, thresholds
//!
//! Data-parallel loops go through [`par`]; with the default `parallel`
//! feature they run on rayon, otherwise sequentially, with identical results.

pub mod data;
pub mod error;
pub mod gradcore;
pub mod inference;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod par;
pub mod trainer;

pub use error::{Error, Result};
