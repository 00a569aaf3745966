use rand::seq::SliceRandom;

use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageRGB};
use crate::rng::{derive_seed, seeded};
use crate::tensor::Tensor4;

const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Images in NCHW with values in [0, 1], their labels, and the manifest
/// record each sample came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor4<f32>,
    pub labels: Vec<f32>,
    pub record_ids: Vec<usize>,
}

/// One image as CHW floats in [0, 1] at `size`×`size`. Resizing works on
/// the float planes, so values are not re-quantized to 8 bits.
pub fn image_to_chw(image: &ImageRGB, size: usize) -> Vec<f32> {
    let (w, h) = image.dims();
    let mut out = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        let plane: Vec<f32> = image.channel_plane(c).into_iter().map(|v| v / 255.0).collect();
        if (w, h) == (size, size) {
            out.extend(plane);
        } else {
            out.extend(crate::raster::resize_bilinear(&plane, w, h, size, size));
        }
    }
    out
}

pub fn load_image(manifest: &DatasetManifest, id: usize) -> Result<ImageRGB> {
    ImageRGB::load_png(&manifest.image_path(id))
}

pub fn load_mask(manifest: &DatasetManifest, id: usize) -> Result<Option<BinaryMask>> {
    manifest.mask_path(id).map(|p| BinaryMask::load_png(&p)).transpose()
}

/// Decodes the given records, bilinearly resizes them to `target_size` and
/// packs them in id order.
pub fn load_batch(manifest: &DatasetManifest, record_ids: &[usize], target_size: usize) -> Result<Batch> {
    if record_ids.is_empty() || target_size == 0 {
        return Err(Error::InvalidArgument("a batch needs at least one record and a positive size".into()));
    }
    let mut data = Vec::with_capacity(record_ids.len() * 3 * target_size * target_size);
    let mut labels = Vec::with_capacity(record_ids.len());
    for &id in record_ids {
        let rec = manifest
            .records
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("record id {id} out of range ({} records)", manifest.records.len())))?;
        data.extend(image_to_chw(&load_image(manifest, id)?, target_size));
        labels.push(rec.label as f32);
    }
    Ok(Batch {
        images: Tensor4::from_vec([record_ids.len(), 3, target_size, target_size], data)?,
        labels,
        record_ids: record_ids.to_vec(),
    })
}

/// The split's records permuted by (`shuffle_seed`, `epoch`) and cut into
/// batches; the last batch may be short.
pub fn epoch_iterator(
    manifest: &DatasetManifest,
    split: Split,
    batch_size: usize,
    shuffle_seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut ids = manifest.ids(split);
    if ids.is_empty() {
        return Err(Error::Manifest(format!("the {split:?} split is empty")));
    }
    ids.shuffle(&mut seeded(derive_seed(shuffle_seed, epoch as u64, SHUFFLE_TAG)));
    Ok(ids.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
