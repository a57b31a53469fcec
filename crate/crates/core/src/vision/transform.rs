//! Geometric and photometric image transforms.
//!
//! Everything here is a pure function of its arguments; the only randomness
//! comes from an explicit [`RngState`].

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::vision::image::Image;

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`. Gray images pass through.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let px = img
        .pixels()
        .chunks_exact(3)
        .map(|p| to_u8(0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])))
        .collect();
    Image::gray(img.height(), img.width(), px).expect("same extent")
}

fn remap(img: &Image, height: usize, width: usize, mut src: impl FnMut(usize, usize) -> (usize, usize)) -> Image {
    let c = img.channels();
    let mut px = Vec::with_capacity(height * width * c);
    for r in 0..height {
        for col in 0..width {
            let (sr, sc) = src(r, col);
            for ch in 0..c {
                px.push(img.get(sr, sc, ch));
            }
        }
    }
    Image::new(height, width, c, px).expect("remap keeps a valid extent")
}

/// Bilinear sample at fractional `(y, x)`; `None` outside the pixel grid.
fn bilinear(img: &Image, y: f64, x: f64, ch: usize) -> Option<f64> {
    const EDGE: f64 = 1e-9;
    let (h, w) = (img.height() as f64, img.width() as f64);
    if y < -EDGE || x < -EDGE || y > h - 1.0 + EDGE || x > w - 1.0 + EDGE {
        return None;
    }
    let y = y.clamp(0.0, h - 1.0);
    let x = x.clamp(0.0, w - 1.0);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let y1 = (y0 + 1).min(img.height() - 1);
    let x1 = (x0 + 1).min(img.width() - 1);
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let p = |r, c| f64::from(img.get(r, c, ch));
    let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
    let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Bilinear resize with corner-aligned sampling: output corners map onto input corners.
pub fn resize(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("resize target {height}x{width} must be positive")));
    }
    if height == img.height() && width == img.width() {
        return Ok(img.clone());
    }
    let step = |src: usize, dst: usize| if dst > 1 { (src - 1) as f64 / (dst - 1) as f64 } else { 0.0 };
    let (sy, sx) = (step(img.height(), height), step(img.width(), width));
    let c = img.channels();
    let mut px = Vec::with_capacity(height * width * c);
    for r in 0..height {
        for col in 0..width {
            for ch in 0..c {
                let v = bilinear(img, r as f64 * sy, col as f64 * sx, ch).expect("inside the grid");
                px.push(to_u8(v));
            }
        }
    }
    Image::new(height, width, c, px)
}

/// Mirror across the vertical axis (left and right swap).
pub fn flip_h(img: &Image) -> Image {
    let w = img.width();
    remap(img, img.height(), w, |r, c| (r, w - 1 - c))
}

/// Mirror across the horizontal axis (top and bottom swap).
pub fn flip_v(img: &Image) -> Image {
    let h = img.height();
    remap(img, h, img.width(), |r, c| (h - 1 - r, c))
}

/// Counter-clockwise rotation by `degrees` about the image center.
///
/// Multiples of 90 degrees are exact pixel permutations (a quarter turn swaps
/// height and width). Other angles keep the extent, sample bilinearly and
/// fill anything that falls outside the source with black.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let turns = degrees / 90.0;
    if turns.fract() == 0.0 {
        return match turns.rem_euclid(4.0) as u8 {
            0 => img.clone(),
            1 => remap(img, w, h, |r, c| (c, w - 1 - r)),
            2 => remap(img, h, w, |r, c| (h - 1 - r, w - 1 - c)),
            _ => remap(img, w, h, |r, c| (h - 1 - c, r)),
        };
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let ch = img.channels();
    let mut px = Vec::with_capacity(h * w * ch);
    for r in 0..h {
        for c in 0..w {
            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
            let sx = cx + cos * dx - sin * dy;
            let sy = cy + sin * dx + cos * dy;
            for k in 0..ch {
                px.push(bilinear(img, sy, sx, k).map_or(0, to_u8));
            }
        }
    }
    Image::new(h, w, ch, px).expect("same extent")
}

/// The `height x width` window whose top-left corner is `(top, left)`.
pub fn crop(img: &Image, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 || top + height > img.height() || left + width > img.width() {
        return Err(Error::InvalidArgument(format!(
            "crop {height}x{width} at ({top}, {left}) does not fit a {}x{} image",
            img.height(),
            img.width()
        )));
    }
    Ok(remap(img, height, width, |r, c| (top + r, left + c)))
}

/// A `height x width` crop at a uniformly drawn valid offset.
pub fn random_crop(img: &Image, height: usize, width: usize, rng: &mut RngState) -> Result<Image> {
    if height == 0 || width == 0 || height > img.height() || width > img.width() {
        return Err(Error::InvalidArgument(format!(
            "crop {height}x{width} larger than the {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let top = rng.below((img.height() - height + 1) as u64) as usize;
    let left = rng.below((img.width() - width + 1) as u64) as usize;
    crop(img, top, left, height, width)
}
