//! Turning catalog records into network input batches.

use rayon::prelude::*;

use crate::catalog::GalaxyRecord;
use crate::error::Result;
use crate::image::read_image;
use crate::image::{augment, AugmentOptions, AugmentationSeedState, CROP_SIDE, STORED_SIDE};
use crate::image::{preprocess, Image};
use crate::nn::Tensor;
use crate::scalar::Scalar;
use crate::seed;

/// Read a record's image, preprocessing it to the stored side if needed.
pub fn load_stored(record: &GalaxyRecord) -> Result<Image<f32>> {
    let img = read_image(&record.image_ref)?;
    if img.height() == STORED_SIDE && img.width() == STORED_SIDE && img.channels() == 1 {
        Ok(img)
    } else {
        preprocess(&img, STORED_SIDE)
    }
}

/// Load and augment `records` into an `n x 1 x 224 x 224` tensor. Record `i`
/// draws its augmentation from `record_seed(seed, id, stream, index)`.
pub fn assemble_batch<T: Scalar>(
    records: &[&GalaxyRecord],
    seed_value: u64,
    stream: u64,
    index: u64,
    opts: &AugmentOptions,
) -> Result<Tensor<T>> {
    let plane = CROP_SIDE * CROP_SIDE;
    let crops: Vec<Image<f32>> = records
        .par_iter()
        .map(|r| {
            let mut state = AugmentationSeedState::new(seed::record_seed(seed_value, &r.id, stream, index));
            augment(&load_stored(r)?, &mut state, opts)
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(records.len() * plane);
    for c in &crops {
        data.extend(c.pixels().iter().map(|&p| T::from_f64_lossy(p as f64)));
    }
    Ok(Tensor::from_vec(records.len(), 1, CROP_SIDE, CROP_SIDE, data))
}
