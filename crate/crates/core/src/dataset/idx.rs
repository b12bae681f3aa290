//! IDX files as distributed with MNIST. All header integers are big-endian.

use std::io::Write;
use std::path::Path;

use super::{read_file, Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub(crate) const IMAGE_MAGIC: u32 = 0x0000_0803;
pub(crate) const LABEL_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX3 image file (and optionally its IDX1 label file). Pixels are
/// scaled from `0..=255` to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let (features, shape) = parse_idx_images(&read_file(images_path)?)?;
    let labels = match labels_path {
        Some(p) => {
            let labels = parse_idx_labels(&read_file(p)?)?;
            if labels.len() != features.rows() {
                return Err(Error::Consistency(format!(
                    "{} images but {} labels",
                    features.rows(),
                    labels.len()
                )));
            }
            Some(labels)
        }
        None => None,
    };
    Dataset::new(features, labels)?.with_shape(shape)
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::WrongMagic {
            expected: format!("{expected:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<(Matrix, ImageShape)> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let d = rows * cols;
    let expected = 16 + count * d;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if count == 0 || d == 0 {
        return Err(Error::EmptyInput);
    }
    let data = bytes[16..expected]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    Ok((Matrix::new(count, d, data)?, ImageShape::new(rows, cols, 1)))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].iter().map(|&b| usize::from(b)).collect())
}

/// Writes raw 8-bit images in IDX3 layout.
pub fn write_idx_images<W: Write>(
    mut out: W,
    pixels: &[u8],
    count: usize,
    rows: usize,
    cols: usize,
) -> std::io::Result<()> {
    assert_eq!(pixels.len(), count * rows * cols, "pixel buffer size");
    for v in [IMAGE_MAGIC, count as u32, rows as u32, cols as u32] {
        out.write_all(&v.to_be_bytes())?;
    }
    out.write_all(pixels)
}

pub fn write_idx_labels<W: Write>(mut out: W, labels: &[u8]) -> std::io::Result<()> {
    out.write_all(&LABEL_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)
}
