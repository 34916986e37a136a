//! Dataset directories:
//!
//! ```text
//! root/source/NNNNNN.pgm   source frame
//! root/mask/NNNNNN.pgm     noisy mask to refine
//! root/gt/NNNNNN.pgm       ground truth
//! ```
//!
//! Indices are six zero-padded digits. Masks are binarized at gray level
//! 128, which also collapses any multi-valued ground-truth codes (shadow,
//! unknown) into plain foreground/background.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::pgm::{frame_to_pgm, mask_to_pgm, pgm_to_frame, pgm_to_mask, read_pgm_file, write_pgm};
use crate::error::{Error, Result};
use crate::synth::Sample;

pub const SOURCE_DIR: &str = "source";
pub const MASK_DIR: &str = "mask";
pub const GT_DIR: &str = "gt";

pub fn index_name(index: usize) -> String {
    format!("{index:06}")
}

fn parse_index_name(file_name: &str) -> Option<&str> {
    let stem = file_name.strip_suffix(".pgm")?;
    (stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit())).then_some(stem)
}

/// `NNNNNN.pgm` files in `dir`, keyed by their index. Other files are
/// ignored.
pub fn list_indexed_pgms(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(idx) = name.to_str().and_then(parse_index_name) {
            if entry.file_type()?.is_file() {
                out.insert(idx.to_string(), entry.path());
            }
        }
    }
    Ok(out)
}

fn ingest(index: &str, sub: &str, path: &Path) -> Result<crate::io::GrayImage> {
    read_pgm_file(path).map_err(|e| Error::Ingestion {
        index: format!("{index}/{sub}"),
        reason: e.to_string(),
    })
}

/// Loads every complete triple in ascending index order. An index present
/// in only some of the subdirectories is an error.
pub fn load_dataset_dir(root: &Path) -> Result<Vec<Sample>> {
    let subs = [SOURCE_DIR, MASK_DIR, GT_DIR];
    let mut listings = Vec::with_capacity(3);
    for sub in subs {
        let dir = root.join(sub);
        if !dir.is_dir() {
            return Err(Error::Ingestion {
                index: sub.to_string(),
                reason: format!("missing directory {}", dir.display()),
            });
        }
        listings.push(list_indexed_pgms(&dir)?);
    }
    let all: BTreeSet<&String> = listings.iter().flat_map(|l| l.keys()).collect();
    for idx in &all {
        for (sub, listing) in subs.iter().zip(&listings) {
            if !listing.contains_key(*idx) {
                return Err(Error::Ingestion {
                    index: format!("{idx}/{sub}"),
                    reason: "file missing".into(),
                });
            }
        }
    }

    let mut samples = Vec::with_capacity(all.len());
    for idx in all {
        let source = ingest(idx, SOURCE_DIR, &listings[0][idx])?;
        let mask = ingest(idx, MASK_DIR, &listings[1][idx])?;
        let gt = ingest(idx, GT_DIR, &listings[2][idx])?;
        if !source.same_dims(&mask) || !source.same_dims(&gt) {
            return Err(Error::Ingestion {
                index: idx.clone(),
                reason: format!(
                    "dims differ: source {:?}, mask {:?}, gt {:?}",
                    source.dims(),
                    mask.dims(),
                    gt.dims()
                ),
            });
        }
        samples.push(Sample::new(
            pgm_to_frame(&source),
            pgm_to_mask(&mask),
            pgm_to_mask(&gt),
        )?);
    }
    Ok(samples)
}

/// Writes samples as indices `000001`, `000002`, ... under `root`, which
/// must already exist.
pub fn write_dataset_dir(root: &Path, samples: &[Sample]) -> Result<()> {
    for sub in [SOURCE_DIR, MASK_DIR, GT_DIR] {
        fs::create_dir_all(root.join(sub))?;
    }
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{}.pgm", index_name(i + 1));
        fs::write(
            root.join(SOURCE_DIR).join(&name),
            write_pgm(&frame_to_pgm(&s.source)),
        )?;
        fs::write(
            root.join(MASK_DIR).join(&name),
            write_pgm(&mask_to_pgm(&s.mask_noisy)),
        )?;
        fs::write(
            root.join(GT_DIR).join(&name),
            write_pgm(&mask_to_pgm(&s.mask_gt)),
        )?;
    }
    Ok(())
}
