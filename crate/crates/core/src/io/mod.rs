//! File formats: binary netpbm (P5) images, the dataset directory layout,
//! and the refiner checkpoint.

mod checkpoint;
mod dataset;
mod pgm;

pub use checkpoint::{
    checkpoint_len, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dataset::{
    index_name, list_indexed_pgms, load_dataset_dir, write_dataset_dir, GT_DIR, MASK_DIR,
    SOURCE_DIR,
};
pub use pgm::{
    frame_to_pgm, mask_to_pgm, pgm_to_frame, pgm_to_mask, read_pgm, read_pgm_file, write_pgm,
    GrayImage, MASK_THRESHOLD,
};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Sibling path used while a file or directory is being written.
pub fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.tmp.{}", std::process::id()))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so a
/// failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    if let Err(e) = fs::write(&tmp, bytes) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
