//! Feature matrices on disk: CSV, IDX (MNIST) and the native `UMCLUST1`
//! little-endian binary format, plus image augmentation.

mod augment;
mod binary;
mod csv;
mod idx;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use self::augment::{augment, AugmentationSpec};
pub use self::binary::{load_binary_matrix, save_binary_matrix, write_binary_matrix, BINARY_MAGIC};
pub use self::csv::{load_csv, load_label_file, parse_csv};
pub use self::idx::{load_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels};

/// A set of `m` samples with `d` finite features each and optional labels.
///
/// Immutable once built. Labels ride along for evaluation only; the clustering
/// entry points take the feature [`Matrix`] and never see them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    shape: Option<ImageShape>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some((row, column)) = features.find_non_finite() {
            return Err(Error::NonFinite { row, column });
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(Error::Consistency(format!(
                    "{} samples but {} labels",
                    features.rows(),
                    labels.len()
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            shape: None,
        })
    }

    pub fn with_shape(mut self, shape: ImageShape) -> Result<Self> {
        shape.check(self.feature_dim())?;
        self.shape = Some(shape);
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn shape(&self) -> Option<ImageShape> {
        self.shape
    }

    pub fn sample_count(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn into_parts(self) -> (Matrix, Option<Vec<usize>>) {
        (self.features, self.labels)
    }
}

/// How a flat feature row maps onto an image (row-major, channels interleaved).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, feature_dim: usize) -> Result<()> {
        if !matches!(self.channels, 1 | 3) {
            return Err(Error::InvalidConfig(format!(
                "image channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.len() != feature_dim {
            return Err(Error::Dimension {
                expected: feature_dim,
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ImageShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl FromStr for ImageShape {
    type Err = Error;

    /// Parses `HxWxC` (or `HxW`, meaning one channel).
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(['x', 'X'])
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidConfig(format!("bad image shape {s:?}")))?;
        match parts[..] {
            [h, w] => Ok(Self::new(h, w, 1)),
            [h, w, c] => Ok(Self::new(h, w, c)),
            _ => Err(Error::InvalidConfig(format!(
                "bad image shape {s:?}, expected HxWxC"
            ))),
        }
    }
}

/// On-disk matrix encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Idx,
    Bin,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "idx" => Ok(Self::Idx),
            "bin" => Ok(Self::Bin),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

/// Loads a dataset in any supported format. `labels` is the trailing-column
/// flag for CSV, and the label file for IDX; it must be absent for `bin`.
pub fn load(path: &Path, format: InputFormat, labels: LabelSource<'_>) -> Result<Dataset> {
    match (format, labels) {
        (InputFormat::Csv, LabelSource::None) => load_csv(path, false),
        (InputFormat::Csv, LabelSource::TrailingColumn) => load_csv(path, true),
        (InputFormat::Idx, LabelSource::None) => load_idx(path, None),
        (InputFormat::Idx, LabelSource::File(l)) => load_idx(path, Some(l)),
        (InputFormat::Bin, LabelSource::None) => load_binary_matrix(path),
        (format, labels) => Err(Error::InvalidConfig(format!(
            "label source {labels:?} is not supported for {format:?} input"
        ))),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum LabelSource<'a> {
    None,
    TrailingColumn,
    File(&'a Path),
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_invariants() {
        assert!(matches!(
            Dataset::new(Matrix::zeros(0, 3), None),
            Err(Error::EmptyInput)
        ));
        let m = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(matches!(
            Dataset::new(m, None),
            Err(Error::NonFinite { row: 0, column: 1 })
        ));
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(Dataset::new(m, Some(vec![0])).is_err());
    }

    #[test]
    fn image_shape_parsing() {
        assert_eq!("28x28x1".parse::<ImageShape>().unwrap(), ImageShape::new(28, 28, 1));
        assert_eq!("4x5".parse::<ImageShape>().unwrap(), ImageShape::new(4, 5, 1));
        assert!("4x".parse::<ImageShape>().is_err());
        assert!(ImageShape::new(2, 2, 2).check(8).is_err());
        assert!(ImageShape::new(2, 2, 3).check(11).is_err());
    }
}
