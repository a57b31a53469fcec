//! Architecture builders, transfer-learning surgery and weight persistence.

pub mod archive;
pub mod builders;
pub mod spec;
pub mod surgery;

pub use archive::{load_weights, read_weights, save_weights, write_atomic, write_weights, LayerRecord, WeightArchive};
pub use builders::{proposed_cnn, residual_style, vgg_style, ResidualProfile, VggProfile, INPUT_RESCALE};
pub use spec::{LayerDesc, LayerKind, ModelSpec};
pub use surgery::{freeze_features, replace_head, unfreeze_all};
