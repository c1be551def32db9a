//! Grayscale preprocessing and seeded augmentation (flips, rotation, crop).

mod augment;
mod io;

pub use augment::{
    apply_params, augment, crop, flip_horizontal, flip_vertical, rotate, AugmentOptions, AugmentParams,
    AugmentationSeedState, BorderMode, CROP_SIDE, STORED_SIDE,
};
pub use io::{read_image, write_image, MAGIC};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `height x width x channels` pixels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<T>,
    pub provenance: String,
}

impl<T: Scalar> Image<T> {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("{channels} channels (expected 1 or 3)")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} pixels for {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        if let Some(p) = pixels
            .iter()
            .find(|p| !(p.is_finite() && **p >= T::zero() && **p <= T::one()))
        {
            return Err(Error::ImageFormat(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
            provenance: String::new(),
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// 8-bit source data, scaled into [0, 1].
    pub fn from_u8(height: usize, width: usize, channels: usize, data: &[u8]) -> Result<Self> {
        let scale = T::from_f64_lossy(255.0);
        Self::new(
            height,
            width,
            channels,
            data.iter()
                .map(|&b| T::from_u8(b).expect("u8 converts") / scale)
                .collect(),
        )
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, pixels: Vec<T>) -> Self {
        debug_assert_eq!(pixels.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            pixels,
            provenance: String::new(),
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
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

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            pixels: self
                .pixels
                .iter()
                .map(|&p| U::from_f64_lossy(p.to_f64_lossy()))
                .collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Average the three colour channels.
pub fn to_grayscale<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    if img.channels != 3 {
        return Err(Error::Shape(format!(
            "grayscale conversion needs 3 channels, got {}",
            img.channels
        )));
    }
    let three = T::from_f64_lossy(3.0);
    let pixels = img
        .pixels
        .chunks_exact(3)
        .map(|c| (c[0] + c[1] + c[2]) / three)
        .collect();
    Ok(Image::from_raw(img.height, img.width, 1, pixels).with_provenance(img.provenance.clone()))
}

/// Linear interpolation that stays within `[min(a, b), max(a, b)]`.
#[inline]
pub(crate) fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    let v = a + (b - a) * t;
    v.max(a.min(b)).min(a.max(b))
}

/// Bilinear resize of a square image to `side x side` (half-pixel centres).
pub fn resize<T: Scalar>(img: &Image<T>, side: usize) -> Result<Image<T>> {
    if img.height != img.width {
        return Err(Error::Shape(format!(
            "resize needs a square image, got {}x{}",
            img.height, img.width
        )));
    }
    if side == 0 {
        return Err(Error::InvalidArgument("resize to zero side".into()));
    }
    if side == img.height {
        return Ok(img.clone());
    }
    let n = img.height;
    let c = img.channels;
    let scale = n as f64 / side as f64;
    // Per-axis source index pairs and weights; identical for rows and columns.
    let taps: Vec<(usize, usize, T)> = (0..side)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, T::from_f64_lossy(s - i0 as f64))
        })
        .collect();
    let mut out = Vec::with_capacity(side * side * c);
    for &(y0, y1, fy) in &taps {
        for &(x0, x1, fx) in &taps {
            for ch in 0..c {
                let top = lerp(img.get(y0, x0, ch), img.get(y0, x1, ch), fx);
                let bottom = lerp(img.get(y1, x0, ch), img.get(y1, x1, ch), fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    Ok(Image::from_raw(side, side, c, out).with_provenance(img.provenance.clone()))
}

/// Grayscale (when colour) then resize to the stored side.
pub fn preprocess<T: Scalar>(img: &Image<T>, side: usize) -> Result<Image<T>> {
    let gray = if img.channels == 3 {
        to_grayscale(img)?
    } else {
        img.clone()
    };
    resize(&gray, side)
}
