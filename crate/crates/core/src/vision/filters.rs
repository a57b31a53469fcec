//! The standard 3x3 filter bank.
//!
//! Kernels are stored as integer coefficients plus a divisor so that the
//! arithmetic is exact until the final division. Results are rounded half
//! away from zero and clamped into 0..=255. Application is a valid
//! cross-correlation; every kernel in the bank is symmetric under a
//! half-turn, so this equals true convolution.

use crate::error::{Error, Result};
use crate::nn::KernelSpec;
use crate::tensor::Tensor;
use crate::vision::image::Image;
use crate::vision::transform::to_grayscale;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Filter {
    pub name: &'static str,
    /// Row-major 3x3 coefficients.
    pub coeffs: [i32; 9],
    pub divisor: i32,
}

pub const FILTER_BANK: [Filter; 7] = [
    Filter {
        name: "identity",
        coeffs: [0, 0, 0, 0, 1, 0, 0, 0, 0],
        divisor: 1,
    },
    Filter {
        name: "edge-1",
        coeffs: [1, 0, -1, 0, 0, 0, -1, 0, 1],
        divisor: 1,
    },
    Filter {
        name: "edge-2",
        coeffs: [0, -1, 0, -1, 4, -1, 0, -1, 0],
        divisor: 1,
    },
    Filter {
        name: "edge-3",
        coeffs: [-1, -1, -1, -1, 8, -1, -1, -1, -1],
        divisor: 1,
    },
    Filter {
        name: "sharpen",
        coeffs: [0, -1, 0, -1, 5, -1, 0, -1, 0],
        divisor: 1,
    },
    Filter {
        name: "box-blur",
        coeffs: [1, 1, 1, 1, 1, 1, 1, 1, 1],
        divisor: 9,
    },
    Filter {
        name: "gaussian-blur",
        coeffs: [1, 2, 1, 2, 4, 2, 1, 2, 1],
        divisor: 16,
    },
];

pub fn filter_names() -> impl Iterator<Item = &'static str> {
    FILTER_BANK.iter().map(|f| f.name)
}

pub fn find_filter(name: &str) -> Result<&'static Filter> {
    FILTER_BANK
        .iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::UnknownFilter(name.to_string()))
}

impl Filter {
    pub fn coefficient_sum(&self) -> i32 {
        self.coeffs.iter().sum()
    }

    /// The normalized kernel as a single-channel conv layer with zero bias.
    pub fn kernel_spec(&self) -> KernelSpec {
        let w = self.coeffs.iter().map(|&c| c as f32 / self.divisor as f32).collect();
        KernelSpec::new(
            Tensor::from_vec(&[1, 1, 3, 3], w).expect("3x3 kernel"),
            Tensor::zeros(&[1]).expect("one bias"),
        )
        .expect("consistent kernel")
    }

    /// Filters a gray image (color input is converted first). The output is
    /// two pixels smaller along each axis.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        let g = to_grayscale(img);
        let (h, w) = (g.height(), g.width());
        if h < 3 || w < 3 {
            return Err(Error::InvalidArgument(format!("filters need at least a 3x3 image, got {h}x{w}")));
        }
        let d = f64::from(self.divisor);
        Image::from_fn(h - 2, w - 2, |r, c| {
            let mut acc = 0i32;
            for i in 0..3 {
                for j in 0..3 {
                    acc += self.coeffs[i * 3 + j] * i32::from(g.get(r + i, c + j, 0));
                }
            }
            (f64::from(acc) / d).round().clamp(0.0, 255.0) as u8
        })
    }
}

pub fn apply_filter(img: &Image, name: &str) -> Result<Image> {
    find_filter(name)?.apply(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv2d_forward;
    use crate::vision::transform::crop;
    use crate::RngState;
    use proptest::prelude::*;

    fn random_gray(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = RngState::new(seed);
        Image::from_fn(h, w, |_, _| rng.below(256) as u8).unwrap()
    }

    #[test]
    fn bank_membership_and_normalization() {
        let names: Vec<_> = filter_names().collect();
        assert_eq!(names, ["identity", "edge-1", "edge-2", "edge-3", "sharpen", "box-blur", "gaussian-blur"]);
        assert_eq!(find_filter("box-blur").unwrap().coefficient_sum(), 9);
        assert_eq!(find_filter("gaussian-blur").unwrap().coefficient_sum(), 16);
        for edge in ["edge-1", "edge-2", "edge-3"] {
            assert_eq!(find_filter(edge).unwrap().coefficient_sum(), 0);
        }
        assert!(matches!(find_filter("emboss"), Err(Error::UnknownFilter(_))));
    }

    #[test]
    fn kernels_are_half_turn_symmetric() {
        for f in &FILTER_BANK {
            let mut rev = f.coeffs;
            rev.reverse();
            assert_eq!(rev, f.coeffs, "{}", f.name);
        }
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let img = Image::from_fn(3, 3, |r, c| if r * 3 + c < 3 { 1 } else { 0 }).unwrap();
        // sum = 3, 3 / 9 = 0.333 -> 0
        assert_eq!(apply_filter(&img, "box-blur").unwrap().pixels(), &[0]);
        let img = Image::from_fn(3, 3, |r, _| if r == 1 { 2 } else { 0 }).unwrap();
        // gaussian: 2*2 + 4*2 + 2*2 = 16 -> 1
        assert_eq!(apply_filter(&img, "gaussian-blur").unwrap().pixels(), &[1]);
        let img = Image::from_fn(3, 3, |r, c| if (r, c) == (1, 1) { 2 } else { 0 }).unwrap();
        // gaussian: 8 / 16 = 0.5 -> 1
        assert_eq!(apply_filter(&img, "gaussian-blur").unwrap().pixels(), &[1]);
    }

    #[test]
    fn too_small_image_is_rejected() {
        assert!(apply_filter(&Image::filled(2, 5, 1).unwrap(), "identity").is_err());
    }

    proptest! {
        #[test]
        fn identity_is_interior_crop(h in 3usize..10, w in 3usize..10, seed: u64) {
            let img = random_gray(h, w, seed);
            prop_assert_eq!(apply_filter(&img, "identity").unwrap(), crop(&img, 1, 1, h - 2, w - 2).unwrap());
        }

        #[test]
        fn constant_images(h in 3usize..9, w in 3usize..9, v: u8) {
            let img = Image::filled(h, w, v).unwrap();
            for name in ["box-blur", "gaussian-blur", "identity"] {
                prop_assert!(apply_filter(&img, name).unwrap().pixels().iter().all(|&p| p == v));
            }
            for name in ["edge-1", "edge-2", "edge-3"] {
                prop_assert!(apply_filter(&img, name).unwrap().pixels().iter().all(|&p| p == 0));
            }
        }

        #[test]
        fn matches_conv_layer_before_rounding(seed: u64, which in 0usize..7) {
            let f = &FILTER_BANK[which];
            let img = random_gray(6, 7, seed);
            let conv = conv2d_forward(&img.to_tensor(), &f.kernel_spec()).unwrap();
            let out = f.apply(&img).unwrap();
            for (a, &b) in conv.as_slice().iter().zip(out.pixels()) {
                let expected = a.clamp(0.0, 255.0);
                prop_assert!((expected - f32::from(b)).abs() <= 0.5 + 1e-3);
            }
        }
    }
}
