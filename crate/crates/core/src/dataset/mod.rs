//! Manifest bookkeeping, the stratified train/val split and batch loading.

mod batch;
mod manifest;

pub use batch::{epoch_iterator, image_to_chw, load_batch, load_image, load_mask, Batch};
pub use manifest::{
    build_manifest, build_manifest_from_dir, scan_png_dir, train_count, DatasetManifest, Entry, ManifestRecord, Split,
};
