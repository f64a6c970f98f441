//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue pixel bytes.

use std::path::Path;

use super::Instance;
use crate::{Error, Result};

pub const CIFAR_RECORD_LEN: usize = 3073;
const PIXELS: usize = 3072;

/// Parse a batch already in memory. Pixels are scaled to `[0, 1]`; the
/// instance id is the record index.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Vec<Instance>> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::MalformedRecord(format!(
            "length {} is not a multiple of {CIFAR_RECORD_LEN}",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0];
            if label > 9 {
                return Err(Error::MalformedRecord(format!(
                    "record {i} has label {label}"
                )));
            }
            Ok(Instance {
                instance_id: i as i64,
                features: rec[1..].iter().map(|&p| p as f64 / 255.0).collect(),
                class_label: label as i64,
            })
        })
        .collect()
}

pub fn load_cifar10_batch(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar10(&bytes)
}

/// Write records in the same layout; pixel values are taken as-is.
pub fn write_cifar10_batch(path: impl AsRef<Path>, records: &[(u8, Vec<u8>)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(records.len() * CIFAR_RECORD_LEN);
    for (label, pixels) in records {
        if pixels.len() != PIXELS {
            return Err(Error::MalformedRecord(format!(
                "{} pixel bytes, expected {PIXELS}",
                pixels.len()
            )));
        }
        out.push(*label);
        out.extend_from_slice(pixels);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
