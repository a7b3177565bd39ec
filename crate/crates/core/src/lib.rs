//! Radiomic stability workbench.
//!
//! Perturbs reference segmentations, extracts texture features from filtered
//! images, harmonizes them across scanner batches, trains sparse explainable
//! classifiers over repeated stratified splits and quantifies how stable each
//! feature is with respect to the segmentation.

pub mod cohort;
pub mod error;
pub mod features;
pub mod filters;
pub mod harmonize;
pub mod io;
pub mod morphology;
pub mod pipeline;
pub mod rng;
pub mod stability;
pub mod stats;
pub mod table;
pub mod volume;

pub use error::{Error, Result};
pub use table::{FeatureTable, RowKey};
pub use volume::{BinaryMask, Dims, ImageVolume};
