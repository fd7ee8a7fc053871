//! IDX files (the MNIST distribution format), optionally gzip-compressed.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::read_maybe_gzip;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("{what} header truncated")))
}

/// Loads an image/label IDX pair. Pixels are scaled by 1/255 and each image
/// is flattened row-major.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_maybe_gzip(images_path.as_ref())?;
    let labels = read_maybe_gzip(labels_path.as_ref())?;
    let (features, labels) = parse_idx(&images, &labels)?;
    Dataset::from_class_ids(features, &labels)
}

pub(crate) fn parse_idx(images: &[u8], labels: &[u8]) -> Result<(Array2<f64>, Vec<usize>)> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(format!(
            "images magic mismatch: expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"
        )));
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(format!(
            "labels magic mismatch: expected {LABELS_MAGIC:#010x}, found {magic:#010x}"
        )));
    }
    let n_images = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let n_labels = be_u32(labels, 4, "labels")? as usize;
    if n_images != n_labels {
        return Err(Error::format(format!(
            "count mismatch: {n_images} images but {n_labels} labels"
        )));
    }
    let d = rows * cols;
    let pixels = &images[16..];
    if pixels.len() < n_images * d {
        return Err(Error::format(format!(
            "images payload truncated: expected {} bytes, found {}",
            n_images * d,
            pixels.len()
        )));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() < n_labels {
        return Err(Error::format(format!(
            "labels payload truncated: expected {n_labels} bytes, found {}",
            label_bytes.len()
        )));
    }
    let features = Array2::from_shape_vec(
        (n_images, d),
        pixels[..n_images * d].iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
    .map_err(|e| Error::format(e.to_string()))?;
    Ok((features, label_bytes[..n_labels].iter().map(|&y| usize::from(y)).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// Loads an MNIST split from `dir`, accepting the standard file names with
/// or without a `.gz` suffix.
pub fn load_mnist(dir: impl AsRef<Path>, split: MnistSplit) -> Result<Dataset> {
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    let find = |stem: String| -> Result<PathBuf> {
        let plain = dir.as_ref().join(&stem);
        if plain.exists() {
            return Ok(plain);
        }
        let gz = dir.as_ref().join(format!("{stem}.gz"));
        if gz.exists() {
            return Ok(gz);
        }
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", plain.display()),
        )))
    };
    let images = find(format!("{prefix}-images-idx3-ubyte"))?;
    let labels = find(format!("{prefix}-labels-idx1-ubyte"))?;
    load_idx(images, labels)
}
