//! Residual speech embeddings.
//!
//! Speech embeddings mix what was said with how it was said. This crate
//! regresses speech embeddings onto text embeddings of the transcript with a
//! ridge-penalized linear map and keeps the residual, which carries the tone.
//! Around that core it provides the data formats, tone classifiers
//! (multinomial logistic regression and a random forest), evaluation metrics,
//! 2-D projections (PCA, exact t-SNE) and a synthetic dataset generator with a
//! known ground truth.
//!
//! Heavy inner loops run on rayon when the `parallel` feature is enabled
//! (default). Every parallel section computes independent outputs and
//! reduces them in a fixed order, so results are bit-identical with the
//! feature on or off.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod container;
pub mod dataspec;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod projection;
pub mod regression;
pub mod seed;
pub mod synthgen;

pub use dataspec::{
    Corpus, EmbeddingMatrix, LabelSet, Manifest, ManifestMeta, SplitPlan, UtteranceRecord,
};
pub use error::{Error, Result};
