//! Reader for the big-endian IDX files MNIST ships in.

use std::path::Path;

use super::Dataset;
use crate::codec::read_file;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            what,
            offset: at,
            needed: (at + 4).saturating_sub(bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &'static str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic {
            what,
            expected: expected.to_be_bytes().to_vec(),
            found: found.to_be_bytes().to_vec(),
        });
    }
    Ok(())
}

/// Returns `(count, rows, cols, pixels)` with pixels as raw bytes.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    const WHAT: &str = "IDX image file";
    check_magic(bytes, IDX_IMAGES_MAGIC, WHAT)?;
    let n = be_u32(bytes, 4, WHAT)? as usize;
    let rows = be_u32(bytes, 8, WHAT)? as usize;
    let cols = be_u32(bytes, 12, WHAT)? as usize;
    let body = &bytes[16..];
    let need = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::DescriptorMismatch {
            what: WHAT,
            detail: format!("{n} x {rows} x {cols} pixels overflow"),
        })?;
    if body.len() < need {
        return Err(Error::Truncated {
            what: WHAT,
            offset: bytes.len(),
            needed: need - body.len(),
        });
    }
    Ok((n, rows, cols, &body[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    const WHAT: &str = "IDX label file";
    check_magic(bytes, IDX_LABELS_MAGIC, WHAT)?;
    let n = be_u32(bytes, 4, WHAT)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Truncated {
            what: WHAT,
            offset: bytes.len(),
            needed: n - body.len(),
        });
    }
    Ok(&body[..n])
}

/// Loads an image/label IDX pair as `[n, 1, rows, cols]` features in
/// `[0, 1]` with 10 classes.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let img_bytes = read_file(images_path.as_ref())?;
    let lbl_bytes = read_file(labels_path.as_ref())?;
    let (n, rows, cols, pixels) = parse_idx_images(&img_bytes)?;
    let labels = parse_idx_labels(&lbl_bytes)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = Tensor::new(vec![n, 1, rows, cols], data)?;
    let labels = labels.iter().map(|&l| usize::from(l)).collect();
    let name = images_path
        .as_ref()
        .file_name()
        .map_or_else(|| "mnist".to_string(), |f| f.to_string_lossy().into_owned());
    Dataset::new(name, features, labels, 10)
}

/// Loads the official train and t10k files from `dir` as one 70k dataset
/// (train first).
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let train = load_mnist_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = load_mnist_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    )?;
    train.concat(test, "mnist")
}

/// Encodes raw images in IDX form; used to build fixtures.
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_images_rejected() {
        let mut bytes = encode_idx_images(2, 2, &[1, 2, 3, 4, 5, 6, 7, 8]);
        bytes.pop();
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn label_magic_checked() {
        let bytes = encode_idx_images(1, 1, &[0]);
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::BadMagic { .. })));
    }
}
