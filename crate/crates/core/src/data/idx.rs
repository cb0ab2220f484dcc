//! IDX image/label file loading (the MNIST container format).
//!
//! Images use magic 0x00000803 with big-endian count/rows/cols and one byte
//! per pixel; labels use magic 0x00000801. Pixels scale to [0, 1]. Every
//! format violation reports the byte offset it was detected at.

use crate::error::{CoreError, Result};
use crate::tensor::Image;
use std::fs;
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(CoreError::Format(format!(
            "truncated {what}: need bytes {offset}..{end}, file has {}",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Loads an image file and its label file into a dataset of 1-channel images
/// with class labels.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(Vec<Image>, Vec<usize>)> {
    let img_bytes = fs::read(images_path)?;
    let magic = read_u32(&img_bytes, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(CoreError::Format(format!(
            "bad image magic at byte 0: got 0x{magic:08x}, want 0x{IMAGE_MAGIC:08x}"
        )));
    }
    let count = read_u32(&img_bytes, 4, "image count")? as usize;
    let rows = read_u32(&img_bytes, 8, "row count")? as usize;
    let cols = read_u32(&img_bytes, 12, "column count")? as usize;
    let expected = 16 + count * rows * cols;
    if img_bytes.len() != expected {
        return Err(CoreError::Format(format!(
            "image payload has {} bytes, header at bytes 4..16 implies {expected}",
            img_bytes.len()
        )));
    }

    let lab_bytes = fs::read(labels_path)?;
    let magic = read_u32(&lab_bytes, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(CoreError::Format(format!(
            "bad label magic at byte 0: got 0x{magic:08x}, want 0x{LABEL_MAGIC:08x}"
        )));
    }
    let lab_count = read_u32(&lab_bytes, 4, "label count")? as usize;
    if lab_count != count {
        return Err(CoreError::Format(format!(
            "label count {lab_count} (bytes 4..8) does not match image count {count}"
        )));
    }
    if lab_bytes.len() != 8 + count {
        return Err(CoreError::Format(format!(
            "label payload has {} bytes, header implies {}",
            lab_bytes.len(),
            8 + count
        )));
    }

    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let base = 16 + i * rows * cols;
        let values = img_bytes[base..base + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        images.push(Image::from_values(1, rows, cols, values)?);
    }
    let labels = lab_bytes[8..].iter().map(|&b| b as usize).collect();
    Ok((images, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Byte-level writer independent of the loader.
    fn write_idx(dir: &Path, images: &[[u8; 16]], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let img_path = dir.join("imgs.idx");
        let lab_path = dir.join("labs.idx");
        let mut f = fs::File::create(&img_path).unwrap();
        f.write_all(&0x0000_0803u32.to_be_bytes()).unwrap();
        f.write_all(&(images.len() as u32).to_be_bytes()).unwrap();
        f.write_all(&4u32.to_be_bytes()).unwrap();
        f.write_all(&4u32.to_be_bytes()).unwrap();
        for img in images {
            f.write_all(img).unwrap();
        }
        let mut f = fs::File::create(&lab_path).unwrap();
        f.write_all(&0x0000_0801u32.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
        (img_path, lab_path)
    }

    #[test]
    fn crafted_two_image_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = [0u8; 16];
        a[0] = 255;
        a[5] = 51;
        let b = [128u8; 16];
        let (imgs, labs) = write_idx(dir.path(), &[a, b], &[3, 1]);
        let (images, labels) = load_idx(&imgs, &labs).unwrap();
        assert_eq!(labels, vec![3, 1]);
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].get(0, 0, 0), 1.0);
        assert!((images[0].get(0, 1, 1) - 51.0 / 255.0).abs() < 1e-12);
        assert!((images[1].get(0, 3, 3) - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn zero_image_file_is_empty_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, labs) = write_idx(dir.path(), &[], &[]);
        let (images, labels) = load_idx(&imgs, &labs).unwrap();
        assert!(images.is_empty());
        assert!(labels.is_empty());
    }

    #[test]
    fn wrong_label_magic_names_the_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, labs) = write_idx(dir.path(), &[[0u8; 16]], &[0]);
        // Corrupt the label magic.
        let mut bytes = fs::read(&labs).unwrap();
        bytes[3] = 0x99;
        fs::write(&labs, bytes).unwrap();
        let err = load_idx(&imgs, &labs).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0x00000899"), "message should name the bad magic: {msg}");
        assert!(msg.contains("byte 0"), "message should carry the offset: {msg}");
    }

    #[test]
    fn truncated_payload_reports_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, labs) = write_idx(dir.path(), &[[7u8; 16]], &[0]);
        let bytes = fs::read(&imgs).unwrap();
        fs::write(&imgs, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_idx(&imgs, &labs), Err(CoreError::Format(_))));
    }

    #[test]
    fn count_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, labs) = write_idx(dir.path(), &[[7u8; 16]], &[0, 1]);
        let err = load_idx(&imgs, &labs).unwrap_err();
        assert!(err.to_string().contains("does not match image count"));
    }
}
