//! IDX binary format (MNIST-style image and label files).
//!
//! Image files carry magic `0x00 0x00 0x08 0x03` followed by big-endian
//! u32 counts (items, rows, cols); label files carry `0x00 0x00 0x08 0x01`
//! and one count. Files ending in `.gz` are transparently gunzipped.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{N2dError, Result};

const IMAGE_MAGIC: [u8; 4] = [0x00, 0x00, 0x08, 0x03];
const LABEL_MAGIC: [u8; 4] = [0x00, 0x00, 0x08, 0x01];

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| N2dError::Format(format!("{}: gzip: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ])
}

/// Loads an IDX image file (and matching label file, when given) into a
/// Dataset. Images are flattened row-major to `d = rows * cols`; pixel
/// bytes are kept as raw values in [0, 255].
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let img = read_bytes(images_path)?;
    if img.len() < 16 {
        return Err(N2dError::Format(format!(
            "{}: truncated header ({} bytes)",
            images_path.display(),
            img.len()
        )));
    }
    if img[0..4] != IMAGE_MAGIC {
        return Err(N2dError::Format(format!(
            "{}: bad image magic {:02x?}",
            images_path.display(),
            &img[0..4]
        )));
    }
    let n = be_u32(&img, 4) as usize;
    let rows = be_u32(&img, 8) as usize;
    let cols = be_u32(&img, 12) as usize;
    let d = rows
        .checked_mul(cols)
        .ok_or_else(|| N2dError::Format("rows * cols overflows".into()))?;
    let expected = 16 + n * d;
    if img.len() != expected {
        return Err(N2dError::Format(format!(
            "{}: payload is {} bytes, header implies {}",
            images_path.display(),
            img.len(),
            expected
        )));
    }
    let features = Array2::from_shape_fn((n, d), |(i, j)| f64::from(img[16 + i * d + j]));

    let raw_labels = match labels_path {
        Some(path) => {
            let lab = read_bytes(path)?;
            if lab.len() < 8 || lab[0..4] != LABEL_MAGIC {
                return Err(N2dError::Format(format!(
                    "{}: bad label magic/header",
                    path.display()
                )));
            }
            let n_labels = be_u32(&lab, 4) as usize;
            if lab.len() != 8 + n_labels {
                return Err(N2dError::Format(format!(
                    "{}: payload is {} bytes, header implies {}",
                    path.display(),
                    lab.len(),
                    8 + n_labels
                )));
            }
            if n_labels != n {
                return Err(N2dError::Consistency(format!(
                    "{n} images but {n_labels} labels"
                )));
            }
            Some(lab[8..].iter().map(|&b| i64::from(b)).collect())
        }
        None => None,
    };

    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(features, raw_labels, name, None)
}

/// Serializes images (n x rows x cols bytes) and labels into IDX byte
/// buffers. Used by tests and export tooling for round-trip fixtures.
pub fn write_idx_bytes(images: &[u8], n: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(images.len(), n * rows * cols);
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGE_MAGIC);
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(images);
    out
}

/// Label-file counterpart of [`write_idx_bytes`].
pub fn write_idx_label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC);
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
