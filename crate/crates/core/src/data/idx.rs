//! IDX containers (MNIST, FashionMNIST).

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            msg: format!("header truncated: need {} bytes, file has {}", offset + 4, bytes.len()),
        })
}

fn check_len(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(Error::Parse {
            offset: bytes.len(),
            msg: format!("file truncated: expected {expected} bytes, got {}", bytes.len()),
        });
    }
    Ok(())
}

/// Parses an IDX image file into `[n, 1, rows, cols]` with values in `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        });
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    check_len(bytes, 16, n * rows * cols)?;
    let data = bytes[16..16 + n * rows * cols].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::from_vec(&[n, 1, rows, cols], data)
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let n = read_u32(bytes, 4)? as usize;
    check_len(bytes, 8, n)?;
    Ok(bytes[8..8 + n].iter().map(|&b| b as usize).collect())
}

/// Serializes `[n, rows * cols]` byte images as an IDX image file.
pub fn encode_idx_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label IDX pair as a 10-class dataset.
pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let x = parse_idx_images(&fs::read(images)?)?;
    let y = parse_idx_labels(&fs::read(labels)?)?;
    if x.rows() != y.len() {
        return Err(Error::Parse {
            offset: 4,
            msg: format!("{} images but {} labels", x.rows(), y.len()),
        });
    }
    Dataset::new(x, y, 10, split)
}
