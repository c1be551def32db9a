//! `MB01` image matrix files: magic, u32 height, u32 width, u32 channels
//! (little-endian), then row-major f32 pixels.

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"MB01";
const HEADER: usize = 16;

pub fn write_image<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER + img.pixels().len() * 4);
    buf.extend_from_slice(MAGIC);
    for d in [img.height(), img.width(), img.channels()] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &p in img.pixels() {
        buf.extend_from_slice(&p.to_f32_lossy().to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Image<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
        .map(|img| img.with_provenance(path.to_string_lossy()))
        .map_err(|e| Error::ImageFormat(format!("{}: {e}", path.display())))
}

fn decode(bytes: &[u8]) -> Result<Image<f32>> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::ImageFormat("missing MB01 header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let n = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(c))
        .ok_or_else(|| Error::ImageFormat("dimension overflow".into()))?;
    if bytes.len() != HEADER + 4 * n {
        return Err(Error::ImageFormat(format!(
            "{} payload bytes for {h}x{w}x{c}",
            bytes.len() - HEADER
        )));
    }
    let pixels = bytes[HEADER..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Image::new(h, w, c, pixels)
}
