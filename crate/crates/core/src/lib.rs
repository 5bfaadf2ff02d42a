//! Invariance testing of machine-learned models from their internal signals.
//!
//! A model's signal trace records per-object summaries of its activations under
//! a family of transformations. From a trace this crate builds variance
//! matrices, extracts feature vectors, trains and cross-validates assessors
//! that label models invariant or variant, and renders matrices as heatmaps.

pub mod assessors;
pub mod error;
pub mod features;
pub mod render;
pub mod synth;
pub mod trace;
pub mod varmat;
pub mod workflow;

pub use error::{Error, Result};
pub use features::{extract_all, FeatureConfig, FeatureVector, PlaneFeatures, FEATURE_NAMES};
pub use trace::{
    canonical_planes, read_trace, write_trace, DifKind, FamilyKind, PlaneKey, SignalPlane,
    SignalTrace, TransformationFamily,
};
pub use varmat::{compute_variance_matrix, VarianceMatrix};
