//! IDX ubyte ingestion (the F-MNIST/MNIST container format).
//!
//! Big-endian headers: images carry magic `0x00000803` and dims
//! `[n, rows, cols]`, labels carry magic `0x00000801` and `[n]`.

use std::fs;
use std::path::Path;

use crate::data::LabeledImageSet;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header".to_string()))
}

/// Load an IDX3 image file and IDX1 label file into a labeled set.
/// Pixel bytes scale by 1/255; numeric labels map to names via `class_map`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    class_map: &[String],
) -> Result<LabeledImageSet> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let img_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let magic = read_u32_be(&img_bytes, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            images_path,
            format!("bad magic 0x{magic:08x}, want 0x{IMAGE_MAGIC:08x}"),
        ));
    }
    let n = read_u32_be(&img_bytes, 4, images_path)? as usize;
    let rows = read_u32_be(&img_bytes, 8, images_path)? as usize;
    let cols = read_u32_be(&img_bytes, 12, images_path)? as usize;
    let expected = 16 + n * rows * cols;
    if img_bytes.len() != expected {
        return Err(Error::format(
            images_path,
            format!("{} bytes, want {expected} for {n} {rows}x{cols} images", img_bytes.len()),
        ));
    }

    let lbl_magic = read_u32_be(&lbl_bytes, 0, labels_path)?;
    if lbl_magic != LABEL_MAGIC {
        return Err(Error::format(
            labels_path,
            format!("bad magic 0x{lbl_magic:08x}, want 0x{LABEL_MAGIC:08x}"),
        ));
    }
    let n_labels = read_u32_be(&lbl_bytes, 4, labels_path)? as usize;
    if n_labels != n {
        return Err(Error::format(
            labels_path,
            format!("{n_labels} labels for {n} images"),
        ));
    }
    if lbl_bytes.len() != 8 + n {
        return Err(Error::format(labels_path, "truncated label payload".to_string()));
    }

    let images: Vec<f64> = img_bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let mut labels = Vec::with_capacity(n);
    for &b in &lbl_bytes[8..] {
        let id = b as usize;
        if id >= class_map.len() {
            return Err(Error::format(
                labels_path,
                format!("label byte {id} outside class map of {} names", class_map.len()),
            ));
        }
        labels.push(id);
    }
    LabeledImageSet::new((rows, cols, 1), images, labels, class_map.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_pair(dir: &Path, magic_img: u32, pixels: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        let n = labels.len() as u32;
        let side = ((pixels.len() / labels.len().max(1)) as f64).sqrt() as u32;
        let mut f = fs::File::create(&ip).unwrap();
        f.write_all(&magic_img.to_be_bytes()).unwrap();
        f.write_all(&n.to_be_bytes()).unwrap();
        f.write_all(&side.to_be_bytes()).unwrap();
        f.write_all(&side.to_be_bytes()).unwrap();
        f.write_all(pixels).unwrap();
        let mut f = fs::File::create(&lp).unwrap();
        f.write_all(&LABEL_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&n.to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn four_image_fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        // 4 images of 2x2, pixel bytes 0 and 255 checking the scaling
        let pixels: Vec<u8> = vec![
            0, 255, 0, 255, //
            255, 0, 255, 0, //
            0, 0, 255, 255, //
            255, 255, 0, 0,
        ];
        let labels = vec![0u8, 1, 0, 1];
        let (ip, lp) = write_idx_pair(dir.path(), IMAGE_MAGIC, &pixels, &labels);
        let set = load_idx(&ip, &lp, &["zero".into(), "one".into()]).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.dims(), (2, 2, 1));
        assert_eq!(set.image(0), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(set.label_name(1), "one");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), 0x0000_0802, &[0; 4], &[0]);
        let err = load_idx(&ip, &lp, &["a".into()]).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("images.idx");
        let lp = dir.path().join("labels.idx");
        let mut f = fs::File::create(&ip).unwrap();
        f.write_all(&IMAGE_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&[7, 9]).unwrap();
        let mut f = fs::File::create(&lp).unwrap();
        f.write_all(&LABEL_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&3u32.to_be_bytes()).unwrap();
        f.write_all(&[0, 0, 0]).unwrap();
        let err = load_idx(&ip, &lp, &["a".into()]).unwrap_err();
        assert!(err.to_string().contains("3 labels for 2 images"), "{err}");
    }
}
