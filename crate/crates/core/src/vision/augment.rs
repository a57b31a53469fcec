//! Training-time augmentation chain.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::train::Augment;
use crate::vision::image::Image;
use crate::vision::transform::{flip_h, flip_v, random_crop, resize, rotate, to_grayscale};

/// Side of the random crop relative to the image, before resizing back.
pub const CROP_FRACTION: f64 = 0.9;
/// Rotations are drawn uniformly from `[-MAX_ROTATION_DEG, MAX_ROTATION_DEG]`.
pub const MAX_ROTATION_DEG: f64 = 20.0;

/// Which augmentations run. Each enabled flip fires with probability 1/2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentFlags {
    pub crop: bool,
    pub flip_h: bool,
    pub flip_v: bool,
    pub grayscale: bool,
    pub rotate: bool,
}

impl AugmentFlags {
    pub fn any(&self) -> bool {
        self.crop || self.flip_h || self.flip_v || self.grayscale || self.rotate
    }

    /// Applies the enabled steps in the order grayscale, crop, flip_h, flip_v, rotate.
    pub fn apply(&self, img: &Image, rng: &mut RngState) -> Result<Image> {
        let mut out = if self.grayscale { to_grayscale(img) } else { img.clone() };
        if self.crop {
            let (h, w) = (out.height(), out.width());
            let ch = ((h as f64 * CROP_FRACTION).round() as usize).clamp(1, h);
            let cw = ((w as f64 * CROP_FRACTION).round() as usize).clamp(1, w);
            out = resize(&random_crop(&out, ch, cw, rng)?, h, w)?;
        }
        if self.flip_h && rng.next_f64() < 0.5 {
            out = flip_h(&out);
        }
        if self.flip_v && rng.next_f64() < 0.5 {
            out = flip_v(&out);
        }
        if self.rotate {
            let deg = (rng.next_f64() * 2.0 - 1.0) * MAX_ROTATION_DEG;
            out = rotate(&out, deg);
        }
        Ok(out)
    }
}

impl Augment for AugmentFlags {
    fn augment(&self, input: &Tensor, rng: &mut RngState) -> Result<Tensor> {
        if !self.any() {
            return Ok(input.clone());
        }
        Ok(self.apply(&Image::from_tensor(input)?, rng)?.to_tensor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> Image {
        Image::from_fn(10, 12, |r, c| (r * 12 + c) as u8).unwrap()
    }

    #[test]
    fn disabled_chain_is_identity() {
        let mut rng = RngState::new(1);
        assert_eq!(AugmentFlags::default().apply(&img(), &mut rng).unwrap(), img());
        assert_eq!(rng.counter(), 0);
    }

    #[test]
    fn full_chain_is_seeded_and_keeps_extent() {
        let flags = AugmentFlags {
            crop: true,
            flip_h: true,
            flip_v: true,
            grayscale: true,
            rotate: true,
        };
        let a = flags.apply(&img(), &mut RngState::new(7)).unwrap();
        let b = flags.apply(&img(), &mut RngState::new(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width()), (10, 12));
        let t = flags.augment(&img().to_tensor(), &mut RngState::new(7)).unwrap();
        assert_eq!(t, a.to_tensor());
    }

    #[test]
    fn flags_parse_with_defaults() {
        let f: AugmentFlags = serde_json::from_str(r#"{"flip_h": true}"#).unwrap();
        assert!(f.flip_h && !f.crop);
        assert!(serde_json::from_str::<AugmentFlags>(r#"{"shear": true}"#).is_err());
    }
}
