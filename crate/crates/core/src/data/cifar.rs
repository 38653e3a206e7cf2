//! CIFAR binary batches: one or two label bytes followed by 3072 channel-major pixels.

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PIXELS: usize = 3 * 32 * 32;

/// Parses concatenated records. With `label_bytes == 2` (CIFAR-100) the second
/// (fine) label is used.
pub fn parse_cifar(bytes: &[u8], label_bytes: usize, classes: usize, split: Split) -> Result<Dataset> {
    if !(1..=2).contains(&label_bytes) {
        return Err(Error::config("CIFAR records carry one or two label bytes"));
    }
    let record = label_bytes + PIXELS;
    if bytes.len() % record != 0 {
        let n = bytes.len() / record;
        return Err(Error::Parse {
            offset: n * record,
            msg: format!(
                "trailing partial record: {} bytes is not a multiple of {record}",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / record;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * PIXELS);
    for (i, rec) in bytes.chunks_exact(record).enumerate() {
        let y = rec[label_bytes - 1] as usize;
        if y >= classes {
            return Err(Error::Parse {
                offset: i * record + label_bytes - 1,
                msg: format!("label {y} out of range for {classes} classes"),
            });
        }
        labels.push(y);
        data.extend(rec[label_bytes..].iter().map(|&b| b as f64 / 255.0));
    }
    Dataset::new(Tensor::from_vec(&[n, 3, 32, 32], data)?, labels, classes, split)
}

/// Loads and concatenates several batch files.
pub fn load_cifar(paths: &[&Path], label_bytes: usize, classes: usize, split: Split) -> Result<Dataset> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(fs::read(p)?);
    }
    parse_cifar(&bytes, label_bytes, classes, split)
}
