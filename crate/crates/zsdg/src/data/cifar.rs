//! CIFAR binary batch ingestion.
//!
//! Each record is 1 label byte (CIFAR-10) or 2 label bytes (CIFAR-100:
//! coarse then fine; the fine label is used) followed by 3072 channel-planar
//! pixel bytes (1024 red, 1024 green, 1024 blue, row-major 32×32).

use std::fs;
use std::path::Path;

use crate::data::LabeledImageSet;
use crate::error::{Error, Result};

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const PIXELS: usize = 3 * PLANE;

/// Load one or more CIFAR binary batch files.
pub fn load_cifar_binary(
    paths: &[impl AsRef<Path>],
    label_bytes: usize,
    class_map: &[String],
) -> Result<LabeledImageSet> {
    if !(label_bytes == 1 || label_bytes == 2) {
        return Err(Error::usage("CIFAR records carry 1 or 2 label bytes"));
    }
    let record = label_bytes + PIXELS;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % record != 0 {
            return Err(Error::format(
                path,
                format!(
                    "{} bytes is not a whole number of {record}-byte records",
                    bytes.len()
                ),
            ));
        }
        for rec in bytes.chunks_exact(record) {
            let label = rec[label_bytes - 1] as usize;
            if label >= class_map.len() {
                return Err(Error::format(
                    path,
                    format!(
                        "label byte {label} outside class map of {} names",
                        class_map.len()
                    ),
                ));
            }
            labels.push(label);
            let planes = &rec[label_bytes..];
            // channel-planar -> interleaved H x W x C
            for p in 0..PLANE {
                for ch in 0..3 {
                    images.push(planes[ch * PLANE + p] as f64 / 255.0);
                }
            }
        }
    }
    LabeledImageSet::new((SIDE, SIDE, 3), images, labels, class_map.to_vec())
}
