//! Face presentation-attack detection toolkit.
//!
//! Builds labelled face-image manifests (full frame and face crop), trains
//! small classifiers with binary, multi-task, adversarial-invariance and
//! dynamic-frame-selection strategies, scores them with APCER/BPCER/EER, and
//! explains decisions with Grad-CAM++ heatmaps.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod protocols;
pub mod training;

pub use error::{PadError, Result};
