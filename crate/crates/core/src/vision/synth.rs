//! Synthetic texture fixtures standing in for scan images.
//!
//! Each class is an oriented stripe or checker texture with a random period,
//! phase, contrast and per-pixel noise, so that classes are separable by
//! orientation but no two images are identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::vision::dataset::{LabelMap, LabeledDataset, Sample, MILD, MODERATE, NON, VERY_MILD};
use crate::vision::image::{encode_binary, Image};
use crate::zoo::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    Horizontal,
    Vertical,
    Diagonal,
    AntiDiagonal,
    Checker,
}

/// Texture assigned to each stage name in the four-class fixture tree.
pub const STAGE_TEXTURES: [(&str, TextureKind); 4] = [
    (MILD, TextureKind::Diagonal),
    (MODERATE, TextureKind::Checker),
    (NON, TextureKind::Horizontal),
    (VERY_MILD, TextureKind::Vertical),
];

/// One `height x width` gray texture.
pub fn texture(kind: TextureKind, height: usize, width: usize, rng: &mut RngState) -> Result<Image> {
    let period = 4 + rng.below(3) as usize;
    let phase = rng.below(period as u64) as usize;
    let lo = 30 + rng.below(50) as i32;
    let hi = 170 + rng.below(60) as i32;
    Image::from_fn(height, width, |r, c| {
        let t = match kind {
            TextureKind::Horizontal => r + phase,
            TextureKind::Vertical => c + phase,
            TextureKind::Diagonal => r + c + phase,
            TextureKind::AntiDiagonal => r + (width - c) + phase,
            TextureKind::Checker => (r / (period / 2) + c / (period / 2)) * period / 2 + phase,
        };
        let on = t % period < period / 2;
        let noise = rng.below(41) as i32 - 20;
        ((if on { hi } else { lo }) + noise).clamp(0, 255) as u8
    })
}

/// `per_class` textures for each `(name, kind)` class, square of side `size`,
/// ordered by class. Class indices follow the order of `classes`.
pub fn texture_dataset(classes: &[(&str, TextureKind)], per_class: usize, size: usize, seed: u64) -> Result<LabeledDataset> {
    let labels = LabelMap::new(classes.iter().map(|c| c.0.to_string()).collect())?;
    let root = RngState::new(seed);
    let mut samples = Vec::with_capacity(classes.len() * per_class);
    for (label, &(name, kind)) in classes.iter().enumerate() {
        let mut rng = root.fork(label as u64);
        for i in 0..per_class {
            samples.push(Sample {
                image: texture(kind, size, size, &mut rng)?,
                label,
                source: format!("{name}/{i:05}.pgm").into(),
            });
        }
    }
    LabeledDataset::new(samples, labels)
}

/// A tree in the four-stage directory layout with `counts[i]` images for
/// the i-th entry of [`STAGE_TEXTURES`].
pub fn stage_dataset(counts: [usize; 4], size: usize, seed: u64) -> Result<LabeledDataset> {
    let root = RngState::new(seed);
    let labels = LabelMap::new(STAGE_TEXTURES.iter().map(|c| c.0.to_string()).collect())?;
    let mut samples = Vec::new();
    for (label, (&(name, kind), &n)) in STAGE_TEXTURES.iter().zip(&counts).enumerate() {
        let mut rng = root.fork(label as u64);
        for i in 0..n {
            samples.push(Sample {
                image: texture(kind, size, size, &mut rng)?,
                label,
                source: format!("{name}/{i:05}.pgm").into(),
            });
        }
    }
    LabeledDataset::new(samples, labels)
}

/// Writes every sample as binary PGM/PPM to `<root>/<class>/<file name of source>`,
/// creating one directory per class even when it stays empty.
pub fn write_dataset_dir(ds: &LabeledDataset, root: &Path) -> Result<()> {
    for name in ds.labels().names() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for s in ds.samples() {
        let class = ds.labels().name(s.label).expect("valid label");
        let file = s
            .source
            .file_name()
            .ok_or_else(|| Error::InvalidArgument(format!("sample source {} has no file name", s.source.display())))?;
        write_atomic(&root.join(class).join(file), &encode_binary(&s.image))?;
    }
    Ok(())
}
