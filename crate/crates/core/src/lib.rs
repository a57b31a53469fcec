//! A small convolutional network engine for grayscale image classification.
//!
//! The crate covers the whole experiment path: tensors and layer math,
//! training with Adam or SGD, gradient checking by finite differences,
//! architecture builders with transfer-learning surgery, a binary weight
//! archive, image decoding and augmentation, dataset ingestion with stratified
//! splitting, and confusion-matrix metrics.

// Parameter checks are written as `!(x > 0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod vision;
pub mod zoo;

pub use config::{ExperimentConfig, ModelKind, ModelMeta, Profile};
pub use error::{ArchiveError, Error, Result};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use nn::{Layer, LayerNode, Model};
pub use rng::RngState;
pub use tensor::{argmax, Element, Shape, Tensor};
pub use train::{Example, FitOptions, TrainReport};
pub use vision::{Image, LabelMap, LabeledDataset};
pub use zoo::{ModelSpec, WeightArchive};
