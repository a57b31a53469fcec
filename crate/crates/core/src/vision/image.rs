//! 8-bit images and the netpbm codecs (PGM `P2`/`P5`, PPM `P3`/`P6`).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major, channel-interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("image extent {height}x{width} must be positive")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("images have 1 or 3 channels, got {channels}")));
        }
        let expected = height * width * channels;
        if pixels.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "image pixels",
                expected: vec![expected],
                actual: vec![pixels.len()],
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn gray(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(height, width, 1, pixels)
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::gray(height, width, vec![value; height * width])
    }

    /// Builds a gray image from `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::gray(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    /// `[C, H, W]` tensor of raw 0..=255 intensities.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut data = vec![0.0f32; c * h * w];
        for (i, px) in self.pixels.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                data[ch * h * w + i] = f32::from(v);
            }
        }
        Tensor::from_vec(&[c, h, w], data).expect("dims match pixel count")
    }

    /// Inverse of [`Image::to_tensor`]; values are rounded and clamped into 0..=255.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[c, h, w] = t.dims() else {
            return Err(Error::InvalidArgument(format!("expected a [C, H, W] tensor, got {:?}", t.dims())));
        };
        let src = t.as_slice();
        let mut pixels = vec![0u8; c * h * w];
        for ch in 0..c {
            for i in 0..h * w {
                pixels[i * c + ch] = src[ch * h * w + i].round().clamp(0.0, 255.0) as u8;
            }
        }
        Self::new(h, w, c, pixels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    PgmAscii,
    PgmBinary,
    PpmAscii,
    PpmBinary,
}

impl ImageFormat {
    fn from_magic(m: &[u8]) -> Option<Self> {
        match m {
            b"P2" => Some(Self::PgmAscii),
            b"P5" => Some(Self::PgmBinary),
            b"P3" => Some(Self::PpmAscii),
            b"P6" => Some(Self::PpmBinary),
            _ => None,
        }
    }

    fn channels(self) -> usize {
        match self {
            Self::PgmAscii | Self::PgmBinary => 1,
            Self::PpmAscii | Self::PpmBinary => 3,
        }
    }

    fn binary(self) -> bool {
        matches!(self, Self::PgmBinary | Self::PpmBinary)
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Decode(if self.pos >= self.bytes.len() {
                format!("truncated header: missing {what}")
            } else {
                format!("malformed header: expected {what}")
            }));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decode(format!("{what} out of range")))
    }
}

/// Decodes a netpbm stream, detecting the variant from its magic number.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let format = bytes
        .get(..2)
        .and_then(ImageFormat::from_magic)
        .ok_or_else(|| Error::Decode("not a PGM/PPM stream (expected P2, P3, P5 or P6)".into()))?;
    let mut r = HeaderReader { bytes, pos: 2 };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Decode(format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Decode(format!("zero image extent {width}x{height}")));
    }
    let channels = format.channels();
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Decode("image dimensions overflow".into()))?;

    let pixels = if format.binary() {
        // exactly one whitespace byte separates the header from the raster
        if !bytes.get(r.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::Decode("malformed header: missing raster separator".into()));
        }
        let start = r.pos + 1;
        let raster = bytes.get(start..).unwrap_or_default();
        if raster.len() < count {
            return Err(Error::Decode(format!("truncated raster: {} of {count} bytes", raster.len())));
        }
        raster[..count].to_vec()
    } else {
        let mut px = Vec::with_capacity(count);
        for _ in 0..count {
            let v = r.number("pixel value")?;
            if v > 255 {
                return Err(Error::Decode(format!("pixel value {v} exceeds maxval")));
            }
            px.push(v as u8);
        }
        px
    };
    Image::new(height, width, channels, pixels)
}

/// Binary netpbm: `P5` for gray images, `P6` for RGB.
pub fn encode_binary(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Plain-text netpbm: `P2` for gray images, `P3` for RGB.
pub fn encode_ascii(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P2" } else { "P3" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height);
    for row in img.pixels.chunks(img.width * img.channels) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}
