//! Images, transforms, the filter bank, datasets and synthetic fixtures.

pub mod augment;
pub mod dataset;
pub mod filters;
pub mod image;
pub mod synth;
pub mod transform;

pub use augment::AugmentFlags;
pub use dataset::{
    load_dataset_dir, merge_classes, prepare_image, remap_labels, split_indices, stratified_split, ClassMode, LabelMap, LabeledDataset, LoadStats,
    Sample, ValSplit, DEMENTED, DROP, MILD, MODERATE, NON, VERY_MILD,
};
pub use filters::{apply_filter, filter_names, find_filter, Filter, FILTER_BANK};
pub use image::{decode_image, encode_ascii, encode_binary, Image};
pub use synth::{stage_dataset, texture, texture_dataset, write_dataset_dir, TextureKind};
pub use transform::{crop, flip_h, flip_v, random_crop, resize, rotate, to_grayscale};
