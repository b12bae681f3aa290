//! Artificial image variants used to seed one cluster per original sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Which transforms to apply when generating variants.
///
/// Flips are applied to every variant when enabled. A rotation angle is drawn
/// uniformly from `rotation_degrees` per variant. `crop_fraction < 1` takes a
/// random window of that relative size and pads it back by edge replication.
/// Brightness adds a uniform offset in `[-brightness_delta, brightness_delta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub gaussian_noise_sigma: f64,
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub rotation_degrees: Vec<f64>,
    pub crop_fraction: f64,
    pub brightness_delta: f64,
    pub copies_per_sample: usize,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            gaussian_noise_sigma: 0.05,
            horizontal_flip: false,
            vertical_flip: false,
            rotation_degrees: vec![-10.0, 10.0],
            crop_fraction: 1.0,
            brightness_delta: 0.0,
            copies_per_sample: 3,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    /// Every transform disabled: variants are exact copies.
    pub fn identity(copies_per_sample: usize) -> Self {
        Self {
            gaussian_noise_sigma: 0.0,
            rotation_degrees: vec![0.0],
            copies_per_sample,
            ..Self::default()
        }
    }

    /// Gaussian noise only.
    pub fn noise_only(sigma: f64, copies_per_sample: usize, seed: u64) -> Self {
        Self {
            gaussian_noise_sigma: sigma,
            seed,
            ..Self::identity(copies_per_sample)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.copies_per_sample == 0 {
            return Err(Error::InvalidConfig("copies_per_sample must be >= 1".into()));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "crop_fraction must be in (0, 1], got {}",
                self.crop_fraction
            )));
        }
        if !(self.gaussian_noise_sigma >= 0.0 && self.gaussian_noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gaussian_noise_sigma must be finite and >= 0, got {}",
                self.gaussian_noise_sigma
            )));
        }
        if !self.brightness_delta.is_finite() || self.rotation_degrees.iter().any(|a| !a.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite transform parameter".into()));
        }
        Ok(())
    }
}

/// Returns `m * (1 + copies)` rows: each original followed by its variants,
/// plus the originating sample index of every row. Labels, if any, follow
/// their origin.
pub fn augment(
    dataset: &Dataset,
    shape: ImageShape,
    spec: &AugmentationSpec,
) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    shape.check(dataset.feature_dim())?;
    let src = dataset.features();
    let per = 1 + spec.copies_per_sample;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.gaussian_noise_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut data = Vec::with_capacity(src.rows() * per * src.cols());
    let mut origin = Vec::with_capacity(src.rows() * per);
    let mut scratch = vec![0.0; src.cols()];
    for (i, row) in src.iter_rows().enumerate() {
        data.extend_from_slice(row);
        origin.push(i);
        for _ in 0..spec.copies_per_sample {
            let variant = transform(row, shape, spec, &mut rng, &noise, &mut scratch);
            data.extend_from_slice(&variant);
            origin.push(i);
        }
    }

    let features = Matrix::new(origin.len(), src.cols(), data)?;
    let labels = dataset
        .labels()
        .map(|l| origin.iter().map(|&o| l[o]).collect());
    Ok((Dataset::new(features, labels)?.with_shape(shape)?, origin))
}

fn transform(
    row: &[f64],
    shape: ImageShape,
    spec: &AugmentationSpec,
    rng: &mut ChaCha8Rng,
    noise: &Normal<f64>,
    scratch: &mut [f64],
) -> Vec<f64> {
    let mut img = row.to_vec();
    let (h, w) = (shape.height as isize, shape.width as isize);

    if spec.horizontal_flip {
        remap(&img, scratch, shape, |r, c| (r, w - 1 - c));
        img.copy_from_slice(scratch);
    }
    if spec.vertical_flip {
        remap(&img, scratch, shape, |r, c| (h - 1 - r, c));
        img.copy_from_slice(scratch);
    }
    if !spec.rotation_degrees.is_empty() {
        let angle = spec.rotation_degrees[rng.gen_range(0..spec.rotation_degrees.len())];
        if angle != 0.0 {
            let (sin, cos) = angle.to_radians().sin_cos();
            let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
            // Inverse mapping: rotate the output coordinate back onto the source.
            remap(&img, scratch, shape, |r, c| {
                let (y, x) = (r as f64 - cy, c as f64 - cx);
                let sy = cos * y - sin * x + cy;
                let sx = sin * y + cos * x + cx;
                (sy.round() as isize, sx.round() as isize)
            });
            img.copy_from_slice(scratch);
        }
    }
    if spec.crop_fraction < 1.0 {
        let ch = ((spec.crop_fraction * h as f64).round() as isize).clamp(1, h);
        let cw = ((spec.crop_fraction * w as f64).round() as isize).clamp(1, w);
        let y0 = rng.gen_range(0..=h - ch);
        let x0 = rng.gen_range(0..=w - cw);
        remap(&img, scratch, shape, |r, c| {
            (r.clamp(y0, y0 + ch - 1), c.clamp(x0, x0 + cw - 1))
        });
        img.copy_from_slice(scratch);
    }

    let mut touched = false;
    if spec.brightness_delta != 0.0 {
        let delta = spec.brightness_delta.abs();
        let offset = rng.gen_range(-delta..=delta);
        img.iter_mut().for_each(|v| *v += offset);
        touched = true;
    }
    if spec.gaussian_noise_sigma > 0.0 {
        img.iter_mut().for_each(|v| *v += noise.sample(rng));
        touched = true;
    }
    if touched {
        img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    img
}

/// `dst[r][c] = src[f(r, c)]` with the source coordinate clamped to the image
/// bounds, i.e. edge replication.
fn remap(
    src: &[f64],
    dst: &mut [f64],
    shape: ImageShape,
    f: impl Fn(isize, isize) -> (isize, isize),
) {
    let (h, w, ch) = (shape.height, shape.width, shape.channels);
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = f(r as isize, c as isize);
            let sr = sr.clamp(0, h as isize - 1) as usize;
            let sc = sc.clamp(0, w as isize - 1) as usize;
            let (to, from) = ((r * w + c) * ch, (sr * w + sc) * ch);
            dst[to..to + ch].copy_from_slice(&src[from..from + ch]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[Vec<f64>]) -> Dataset {
        Dataset::new(Matrix::from_rows(rows).unwrap(), None).unwrap()
    }

    #[test]
    fn horizontal_flip_of_two_by_two() {
        let spec = AugmentationSpec {
            horizontal_flip: true,
            ..AugmentationSpec::identity(1)
        };
        let (out, origin) = augment(&ds(&[vec![0.0, 1.0, 0.0, 1.0]]), ImageShape::new(2, 2, 1), &spec).unwrap();
        assert_eq!(out.features().row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(out.features().row(1), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(origin, vec![0, 0]);
    }

    #[test]
    fn vertical_flip_keeps_channels_together() {
        let spec = AugmentationSpec {
            vertical_flip: true,
            ..AugmentationSpec::identity(1)
        };
        // 2x1 image, 3 channels.
        let (out, _) = augment(
            &ds(&[vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]]),
            ImageShape::new(2, 1, 3),
            &spec,
        )
        .unwrap();
        assert_eq!(out.features().row(1), &[0.4, 0.5, 0.6, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn identity_spec_copies_rows() {
        let data = ds(&[vec![0.2, 0.4, 0.6, 0.8], vec![1.0, 0.0, 0.5, 0.25]]);
        let (out, origin) = augment(&data, ImageShape::new(2, 2, 1), &AugmentationSpec::identity(2)).unwrap();
        assert_eq!(out.sample_count(), 6);
        assert_eq!(origin, vec![0, 0, 0, 1, 1, 1]);
        for (r, &o) in origin.iter().enumerate() {
            assert_eq!(out.features().row(r), data.features().row(o));
        }
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let data = ds(&[vec![0.0, 1.0, 0.5, 0.5]]);
        let spec = AugmentationSpec::noise_only(0.1, 3, 42);
        let a = augment(&data, ImageShape::new(2, 2, 1), &spec).unwrap();
        let b = augment(&data, ImageShape::new(2, 2, 1), &spec).unwrap();
        let bits = |d: &Dataset| d.features().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.0), bits(&b.0));
        assert!(a.0.features().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a.0.features().row(1), data.features().row(0));
    }

    #[test]
    fn rotation_by_ninety_degrees() {
        let spec = AugmentationSpec {
            rotation_degrees: vec![90.0],
            ..AugmentationSpec::identity(1)
        };
        // 3x3 with a single lit pixel at the top centre.
        let mut row = vec![0.0; 9];
        row[1] = 1.0;
        let (out, _) = augment(&ds(&[row]), ImageShape::new(3, 3, 1), &spec).unwrap();
        let rotated = out.features().row(1);
        assert_eq!(rotated.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(rotated[4], 0.0);
        assert_ne!(rotated[1], 1.0);
    }

    #[test]
    fn crop_pads_by_edge_replication() {
        let spec = AugmentationSpec {
            crop_fraction: 0.5,
            seed: 3,
            ..AugmentationSpec::identity(4)
        };
        let row: Vec<f64> = (0..16).map(|v| v as f64 / 16.0).collect();
        let (out, _) = augment(&ds(std::slice::from_ref(&row)), ImageShape::new(4, 4, 1), &spec).unwrap();
        for r in 1..5 {
            let v = out.features().row(r);
            // A 2x2 window replicated out: at most four distinct values, all from the source.
            let mut distinct: Vec<f64> = v.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            assert!(distinct.len() <= 4);
            assert!(distinct.iter().all(|x| row.contains(x)));
        }
    }

    #[test]
    fn shape_mismatch_and_bad_spec() {
        let data = ds(&[vec![0.0; 4]]);
        assert!(matches!(
            augment(&data, ImageShape::new(3, 3, 1), &AugmentationSpec::identity(1)),
            Err(Error::Dimension { .. })
        ));
        let bad = AugmentationSpec {
            copies_per_sample: 0,
            ..AugmentationSpec::default()
        };
        assert!(augment(&data, ImageShape::new(2, 2, 1), &bad).is_err());
        let bad = AugmentationSpec {
            crop_fraction: 0.0,
            ..AugmentationSpec::default()
        };
        assert!(augment(&data, ImageShape::new(2, 2, 1), &bad).is_err());
    }
}
