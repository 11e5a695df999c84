//! Weak-supervision label engine for detectors trained on image-level labels.
//!
//! - [`hierarchy`]: hypernym/hyponym DAG, class vocabulary, label expansion.
//! - [`pseudo`]: threshold filtering, argmax pseudo labels, OR-merge with the
//!   expanded image label, reliability weights.
//! - [`loss`]: weighted BCE box and image losses, the combined objective and
//!   gradients with respect to probabilities.
//! - [`lhpg`]: embedding nearest-synset matching and prompt generation.
//! - [`sim`]: a small deterministic self-training simulator on synthetic
//!   hierarchical data.
//! - [`matrix_io`]: the plain-text matrix format used for file exchange.

pub mod error;
pub mod hierarchy;
pub mod lhpg;
pub mod loss;
pub mod matrix_io;
pub mod pseudo;
pub mod sim;

pub use error::{Error, Result};
pub use hierarchy::{
    expand_labels, expanded_mask, HierarchyGraph, LabelVector, SynsetId, Vocabulary,
};
pub use loss::LossBreakdown;
pub use pseudo::{PredictionMatrix, WeightedBoxLabels, WeightedImageLabel};
