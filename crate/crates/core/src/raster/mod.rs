//! Raster types shared by every stage of the pipeline.
//!
//! Coordinates are `x` = column, `y` = row, origin top-left, zero-indexed.
//! All buffers are row-major.

mod io;

pub use io::{
    decode_image_png, decode_mask_png, encode_image_png, encode_mask_png, import_labelmap, load_image,
    load_mask, load_probability, load_segmentation, save_image, save_mask, save_probability,
    save_segmentation,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("PNG decode error in {path}: {message}")]
    Decode { path: String, message: String },
    #[error("PNG encode error: {0}")]
    Encode(String),
    #[error("unsupported PNG format in {path}: {property}")]
    Format { path: String, property: String },
    #[error("dimension mismatch: {context}: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        context: String,
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("invalid pixel value {value} at (x={x}, y={y}) in {path}: {reason}")]
    InvalidPixel {
        path: String,
        x: u32,
        y: u32,
        value: u32,
        reason: String,
    },
    #[error(
        "probability sums out of tolerance: worst pixel (x={x}, y={y}) sums to {sum:.6}"
    )]
    Calibration { x: u32, y: u32, sum: f64 },
    #[error("invalid raster: {0}")]
    Invalid(String),
}

/// Per-pixel tolerance on the sum of class probabilities.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-3;

/// An 8-bit grayscale or RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::Invalid(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(RasterError::Invalid(format!(
                "pixel buffer length {} does not match {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn gray(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        Self::new(width, height, 1, pixels)
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::gray(width, height, vec![value; width as usize * height as usize])
            .expect("positive dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Luma of the pixel at `(x, y)`; gray images return the stored value.
    pub fn luma(&self, x: u32, y: u32) -> u8 {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize;
        match self.channels {
            1 => self.pixels[idx],
            _ => luma(self.pixels[idx], self.pixels[idx + 1], self.pixels[idx + 2]),
        }
    }

    /// Row-major luma plane.
    pub fn luma_plane(&self) -> Vec<u8> {
        match self.channels {
            1 => self.pixels.clone(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|p| luma(p[0], p[1], p[2]))
                .collect(),
        }
    }
}

/// `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    v.round().clamp(0.0, 255.0) as u8
}

/// One boolean per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != width as usize * height as usize {
            return Err(RasterError::Invalid(format!(
                "mask buffer length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    /// Builds a mask from a predicate over `(x, y)`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let idx = self.index(x, y);
        self.bits[idx] = value;
    }

    /// Out-of-bounds coordinates read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u64) < u64::from(self.width)
            && (y as u64) < u64::from(self.height)
            && self.get(x as u32, y as u32)
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> usize {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// True pixel coordinates in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }
}

/// Per-class binary prediction channels; channel `i` (zero-based) holds class `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    width: u32,
    height: u32,
    channels: Vec<BinaryMask>,
}

impl SegmentationMap {
    pub fn new(channels: Vec<BinaryMask>) -> Result<Self, RasterError> {
        let first = channels
            .first()
            .ok_or_else(|| RasterError::Invalid("segmentation map needs at least one class".into()))?;
        let (width, height) = first.dims();
        for (i, ch) in channels.iter().enumerate() {
            if ch.dims() != (width, height) {
                return Err(RasterError::DimensionMismatch {
                    context: format!("class channel {}", i + 1),
                    expected_w: width,
                    expected_h: height,
                    got_w: ch.width(),
                    got_h: ch.height(),
                });
            }
        }
        Ok(Self {
            width,
            height,
            channels,
        })
    }

    pub fn empty(width: u32, height: u32, num_classes: usize) -> Self {
        Self {
            width,
            height,
            channels: vec![BinaryMask::empty(width, height); num_classes.max(1)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn num_classes(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[BinaryMask] {
        &self.channels
    }

    /// Channel for 1-based `class_index`.
    pub fn class(&self, class_index: usize) -> &BinaryMask {
        &self.channels[class_index - 1]
    }

    pub fn into_channels(self) -> Vec<BinaryMask> {
        self.channels
    }

    pub fn total_area(&self) -> usize {
        self.channels.iter().map(BinaryMask::area).sum()
    }

    /// Union of all channels.
    pub fn support(&self) -> BinaryMask {
        let mut out = BinaryMask::empty(self.width, self.height);
        for ch in &self.channels {
            out.union_with(ch);
        }
        out
    }
}

/// Per-pixel per-class probabilities, stored pixel-major (`[pixel * C + c]`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: u32,
    height: u32,
    num_classes: usize,
    values: Vec<f64>,
}

impl ProbabilityMap {
    /// Validates ranges and per-pixel sums.
    pub fn new(width: u32, height: u32, num_classes: usize, values: Vec<f64>) -> Result<Self, RasterError> {
        if num_classes == 0 {
            return Err(RasterError::Invalid("probability map needs at least one class".into()));
        }
        if values.len() != width as usize * height as usize * num_classes {
            return Err(RasterError::Invalid(format!(
                "probability buffer length {} does not match {width}x{height}x{num_classes}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(RasterError::Invalid(format!("probability {v} outside [0, 1]")));
        }
        let mut worst: Option<(usize, f64)> = None;
        for (p, chunk) in values.chunks_exact(num_classes).enumerate() {
            let sum: f64 = chunk.iter().sum();
            let dev = (sum - 1.0).abs();
            if dev > PROBABILITY_SUM_TOLERANCE && worst.is_none_or(|(_, s)| dev > (s - 1.0).abs()) {
                worst = Some((p, sum));
            }
        }
        if let Some((p, sum)) = worst {
            return Err(RasterError::Calibration {
                x: (p % width as usize) as u32,
                y: (p / width as usize) as u32,
                sum,
            });
        }
        Ok(Self {
            width,
            height,
            num_classes,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Probabilities of every class at one pixel.
    pub fn pixel(&self, x: u32, y: u32) -> &[f64] {
        let p = y as usize * self.width as usize + x as usize;
        &self.values[p * self.num_classes..(p + 1) * self.num_classes]
    }

    pub fn pixel_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.num_classes)
    }
}
