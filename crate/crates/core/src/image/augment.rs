use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lerp, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Side of stored (preprocessed) images.
pub const STORED_SIDE: usize = 300;
/// Side of the random crop fed to the network.
pub const CROP_SIDE: usize = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BorderMode {
    #[default]
    Reflect,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    /// When false: no flips, no rotation, centred crop.
    pub enabled: bool,
    pub border: BorderMode,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            enabled: true,
            border: BorderMode::Reflect,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Radians, in (0, π).
    pub angle: f64,
    pub top: usize,
    pub left: usize,
}

impl AugmentParams {
    pub fn identity(input: usize, crop: usize) -> Self {
        let off = (input - crop) / 2;
        Self {
            flip_horizontal: false,
            flip_vertical: false,
            angle: 0.0,
            top: off,
            left: off,
        }
    }
}

/// Seed plus draw counter; the same pair always yields the same parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentationSeedState {
    pub seed: u64,
    pub counter: u64,
}

impl AugmentationSeedState {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Draw the next parameter set for an `input`-sided image cropped to `crop`.
    pub fn draw(&mut self, input: usize, crop: usize) -> AugmentParams {
        let mut rng = seed::rng(seed::derive(self.seed, &[self.counter]));
        self.counter += 1;
        let flip_horizontal = rng.random_bool(0.5);
        let flip_vertical = rng.random_bool(0.5);
        let angle = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break std::f64::consts::PI * u;
            }
        };
        let max = input - crop;
        AugmentParams {
            flip_horizontal,
            flip_vertical,
            angle,
            top: rng.random_range(0..=max),
            left: rng.random_range(0..=max),
        }
    }
}

pub fn flip_horizontal<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        for x in (0..w).rev() {
            for ch in 0..c {
                out.push(img.get(y, x, ch));
            }
        }
    }
    Image::from_raw(h, w, c, out).with_provenance(img.provenance.clone())
}

pub fn flip_vertical<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let row = w * c;
    let mut out = Vec::with_capacity(img.pixels().len());
    for y in (0..h).rev() {
        out.extend_from_slice(&img.pixels()[y * row..(y + 1) * row]);
    }
    Image::from_raw(h, w, c, out).with_provenance(img.provenance.clone())
}

pub fn crop<T: Scalar>(img: &Image<T>, top: usize, left: usize, side: usize) -> Result<Image<T>> {
    if top + side > img.height() || left + side > img.width() {
        return Err(Error::Shape(format!(
            "crop {side} at ({top}, {left}) exceeds {}x{}",
            img.height(),
            img.width()
        )));
    }
    let c = img.channels();
    let mut out = Vec::with_capacity(side * side * c);
    for y in top..top + side {
        let start = (y * img.width() + left) * c;
        out.extend_from_slice(&img.pixels()[start..start + side * c]);
    }
    Ok(Image::from_raw(side, side, c, out).with_provenance(img.provenance.clone()))
}

/// Fold a continuous coordinate into `[-0.5, n - 0.5]` by mirroring at the edges.
fn reflect_coord(s: f64, n: usize) -> f64 {
    let n = n as f64;
    let mut u = (s + 0.5).rem_euclid(2.0 * n);
    if u > n {
        u = 2.0 * n - u;
    }
    u - 0.5
}

/// Bilinear sample at continuous `(sy, sx)`; `value(y, x)` reads in-range pixels.
fn sample<T: Scalar>(value: impl Fn(usize, usize) -> T, h: usize, w: usize, sy: f64, sx: f64, border: BorderMode) -> T {
    match border {
        BorderMode::Reflect => {
            let sy = reflect_coord(sy, h).clamp(0.0, (h - 1) as f64);
            let sx = reflect_coord(sx, w).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (T::from_f64_lossy(sy - y0 as f64), T::from_f64_lossy(sx - x0 as f64));
            let top = lerp(value(y0, x0), value(y0, x1), fx);
            let bottom = lerp(value(y1, x0), value(y1, x1), fx);
            lerp(top, bottom, fy)
        }
        BorderMode::Zero => {
            let (fy0, fx0) = (sy.floor(), sx.floor());
            let (fy, fx) = (T::from_f64_lossy(sy - fy0), T::from_f64_lossy(sx - fx0));
            let at = |y: f64, x: f64| {
                if y >= 0.0 && x >= 0.0 && y < h as f64 && x < w as f64 {
                    value(y as usize, x as usize)
                } else {
                    T::zero()
                }
            };
            let top = lerp(at(fy0, fx0), at(fy0, fx0 + 1.0), fx);
            let bottom = lerp(at(fy0 + 1.0, fx0), at(fy0 + 1.0, fx0 + 1.0), fx);
            lerp(top, bottom, fy)
        }
    }
}

/// Source coordinate for rotated-frame pixel `(y, x)` about the image centre.
#[inline]
fn rotate_source(y: f64, x: f64, cy: f64, cx: f64, cos: f64, sin: f64) -> (f64, f64) {
    let (dy, dx) = (y - cy, x - cx);
    (cy - sin * dx + cos * dy, cx + cos * dx + sin * dy)
}

/// Rotate about the image centre by `angle` radians, bilinear resampling.
pub fn rotate<T: Scalar>(img: &Image<T>, angle: f64, border: BorderMode) -> Image<T> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let (sin, cos) = angle.sin_cos();
    let mut out = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = rotate_source(y as f64, x as f64, cy, cx, cos, sin);
            for ch in 0..c {
                out.push(sample(|yy, xx| img.get(yy, xx, ch), h, w, sy, sx, border));
            }
        }
    }
    Image::from_raw(h, w, c, out).with_provenance(img.provenance.clone())
}

/// Apply flips, rotation and crop described by `params` in one resampling pass.
/// Equivalent to `crop(rotate(flip(img)))`.
pub fn apply_params<T: Scalar>(
    img: &Image<T>,
    params: &AugmentParams,
    side: usize,
    border: BorderMode,
) -> Result<Image<T>> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if params.top + side > h || params.left + side > w {
        return Err(Error::Shape(format!("crop {side} exceeds {h}x{w}")));
    }
    let read = |y: usize, x: usize, ch: usize| {
        let y = if params.flip_vertical { h - 1 - y } else { y };
        let x = if params.flip_horizontal { w - 1 - x } else { x };
        img.get(y, x, ch)
    };
    let mut out = Vec::with_capacity(side * side * c);
    if params.angle == 0.0 {
        for y in params.top..params.top + side {
            for x in params.left..params.left + side {
                for ch in 0..c {
                    out.push(read(y, x, ch));
                }
            }
        }
    } else {
        let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
        let (sin, cos) = params.angle.sin_cos();
        for y in params.top..params.top + side {
            for x in params.left..params.left + side {
                let (sy, sx) = rotate_source(y as f64, x as f64, cy, cx, cos, sin);
                for ch in 0..c {
                    out.push(sample(|yy, xx| read(yy, xx, ch), h, w, sy, sx, border));
                }
            }
        }
    }
    Ok(Image::from_raw(side, side, c, out).with_provenance(img.provenance.clone()))
}

/// Random flips, rotation in (0, π), and a 224x224 crop of a 300x300x1 image.
/// With augmentation disabled the result is the centred crop.
pub fn augment<T: Scalar>(
    img: &Image<T>,
    state: &mut AugmentationSeedState,
    opts: &AugmentOptions,
) -> Result<Image<T>> {
    if img.height() != STORED_SIDE || img.width() != STORED_SIDE || img.channels() != 1 {
        return Err(Error::Shape(format!(
            "augment expects {STORED_SIDE}x{STORED_SIDE}x1, got {}x{}x{}",
            img.height(),
            img.width(),
            img.channels()
        )));
    }
    let params = if opts.enabled {
        state.draw(STORED_SIDE, CROP_SIDE)
    } else {
        AugmentParams::identity(STORED_SIDE, CROP_SIDE)
    };
    apply_params(img, &params, CROP_SIDE, opts.border)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(side: usize) -> Image<f64> {
        let px = (0..side * side)
            .map(|i| ((i % side) as f64 * 0.37 + (i / side) as f64 * 0.11).sin().abs())
            .collect();
        Image::new(side, side, 1, px).unwrap()
    }

    #[test]
    fn flips_are_involutions() {
        let img = Image::new(3, 4, 3, (0..36).map(|i| i as f64 / 36.0).collect()).unwrap();
        assert_eq!(flip_horizontal(&flip_horizontal(&img)), img);
        assert_eq!(flip_vertical(&flip_vertical(&img)), img);
        assert_ne!(flip_horizontal(&img), img);
        assert_eq!(flip_horizontal(&img).get(0, 0, 1), img.get(0, 3, 1));
        assert_eq!(flip_vertical(&img).get(0, 1, 2), img.get(2, 1, 2));
    }

    #[test]
    fn deterministic_given_state() {
        let img = ramp(300);
        let opts = AugmentOptions::default();
        let a = augment(&img, &mut AugmentationSeedState::new(11), &opts).unwrap();
        let b = augment(&img, &mut AugmentationSeedState::new(11), &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width(), a.channels()), (224, 224, 1));
        let mut st = AugmentationSeedState::new(11);
        let _ = augment(&img, &mut st, &opts).unwrap();
        assert_eq!(st.counter, 1);
        let c = augment(&img, &mut st, &opts).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constant_field_is_preserved() {
        for border in [BorderMode::Reflect] {
            let img = Image::filled(300, 300, 1, 0.42f64).unwrap();
            let opts = AugmentOptions { enabled: true, border };
            let mut st = AugmentationSeedState::new(3);
            for _ in 0..5 {
                let out = augment(&img, &mut st, &opts).unwrap();
                assert!(out.pixels().iter().all(|p| (p - 0.42).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn zero_border_darkens_rotated_corners() {
        let img = Image::filled(20, 20, 1, 1.0f64).unwrap();
        let r = rotate(&img, std::f64::consts::FRAC_PI_4, BorderMode::Zero);
        assert!(r.get(0, 0, 0) < 0.5);
        assert!((r.get(10, 10, 0) - 1.0).abs() < 1e-12);
        let r = rotate(&img, std::f64::consts::FRAC_PI_4, BorderMode::Reflect);
        assert!(r.pixels().iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rotation_by_pi_reverses_both_axes() {
        let img = ramp(9);
        let r = rotate(&img, std::f64::consts::PI, BorderMode::Reflect);
        let expect = flip_vertical(&flip_horizontal(&img));
        for (a, b) in r.pixels().iter().zip(expect.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fused_pass_matches_composition() {
        let img = ramp(40);
        let mut st = AugmentationSeedState::new(5);
        for _ in 0..8 {
            let p = st.draw(40, 24);
            let mut staged = img.clone();
            if p.flip_horizontal {
                staged = flip_horizontal(&staged);
            }
            if p.flip_vertical {
                staged = flip_vertical(&staged);
            }
            let staged = crop(&rotate(&staged, p.angle, BorderMode::Reflect), p.top, p.left, 24).unwrap();
            let fused = apply_params(&img, &p, 24, BorderMode::Reflect).unwrap();
            for (a, b) in fused.pixels().iter().zip(staged.pixels()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn draws_stay_in_range() {
        let mut st = AugmentationSeedState::new(9);
        for _ in 0..2000 {
            let p = st.draw(300, 224);
            assert!(p.angle > 0.0 && p.angle < std::f64::consts::PI);
            assert!(p.top <= 76 && p.left <= 76);
        }
    }

    #[test]
    fn wrong_shape_rejected() {
        let mut st = AugmentationSeedState::new(0);
        let img = Image::filled(224, 224, 1, 0.5f32).unwrap();
        assert!(augment(&img, &mut st, &AugmentOptions::default()).is_err());
    }

    #[test]
    fn disabled_is_centre_crop() {
        let img = ramp(300);
        let out = augment(
            &img,
            &mut AugmentationSeedState::new(1),
            &AugmentOptions {
                enabled: false,
                border: BorderMode::Reflect,
            },
        )
        .unwrap();
        assert_eq!(out, crop(&img, 38, 38, 224).unwrap());
    }
}
