//! Random patch pairs from aligned intensity and depth images.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{Mask, Matrix};
use crate::rng::{self, Purpose};

/// Columns are unit-norm patch pairs, vectorized row by row. Unobserved depth
/// entries are zero and the depth norm is taken over observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub yi: Matrix,
    pub yd: Matrix,
    pub masks: Mask,
}

impl PatchBatch {
    /// Fully observed batch from signal matrices.
    pub fn from_signals(yi: Matrix, yd: Matrix) -> Result<Self> {
        if yi.ncols() != yd.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} signals",
                yi.ncols(),
                yd.ncols()
            )));
        }
        let masks = Mask::from_element(yd.nrows(), yd.ncols(), true);
        Ok(Self { yi, yd, masks })
    }

    pub fn len(&self) -> usize {
        self.yi.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fully_observed(&self) -> bool {
        self.masks.iter().all(|&m| m)
    }

    pub fn mask_column(&self, j: usize) -> Vec<bool> {
        self.masks.column(j).iter().copied().collect()
    }

    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            yi: self.yi.select_columns(cols),
            yd: self.yd.select_columns(cols),
            masks: self.masks.select_columns(cols),
        }
    }
}

/// Draws `count` coinciding patch pairs uniformly over all patch positions.
/// Pairs with more than half of the depth patch missing, or with a zero norm
/// in either modality, are rejected; at most `10 * count` positions are tried.
pub fn sample_patches(
    intensity: &[Matrix],
    depth: &[Matrix],
    masks: &[Mask],
    size: usize,
    count: usize,
    seed: u64,
) -> Result<PatchBatch> {
    if intensity.len() != depth.len() || depth.len() != masks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} intensity, {} depth and {} mask images",
            intensity.len(),
            depth.len(),
            masks.len()
        )));
    }
    if intensity.is_empty() || size == 0 {
        return Err(Error::InvalidArgument(
            "need at least one image and a positive patch size".into(),
        ));
    }
    let mut positions = Vec::with_capacity(intensity.len());
    for ((i, d), m) in intensity.iter().zip(depth).zip(masks) {
        if i.shape() != d.shape() || d.shape() != m.shape() {
            return Err(Error::DimensionMismatch(
                "intensity, depth and mask shapes differ".into(),
            ));
        }
        let (r, c) = i.shape();
        if r < size || c < size {
            return Err(Error::TooSmall {
                rows: r,
                cols: c,
                min: size,
            });
        }
        positions.push((r - size + 1) * (c - size + 1));
    }
    let total: usize = positions.iter().sum();

    let p2 = size * size;
    let mut batch = PatchBatch {
        yi: Matrix::zeros(p2, count),
        yd: Matrix::zeros(p2, count),
        masks: Mask::from_element(p2, count, false),
    };
    let mut rng = rng::stream(seed, Purpose::Patches, 0);
    let attempts = 10 * count;
    let mut found = 0;
    let mut tried = 0;
    while found < count && tried < attempts {
        tried += 1;
        let mut pos = rng.random_range(0..total);
        let mut img = 0;
        while pos >= positions[img] {
            pos -= positions[img];
            img += 1;
        }
        let width = intensity[img].ncols() - size + 1;
        let (r0, c0) = (pos / width, pos % width);
        let m = masks[img].view((r0, c0), (size, size));
        let observed = m.iter().filter(|&&v| v).count();
        if 2 * observed < p2 {
            continue;
        }
        let mut yi = batch.yi.column_mut(found);
        let mut yd = batch.yd.column_mut(found);
        let mut mk = batch.masks.column_mut(found);
        for dr in 0..size {
            for dc in 0..size {
                let k = dr * size + dc;
                yi[k] = intensity[img][(r0 + dr, c0 + dc)];
                mk[k] = m[(dr, dc)];
                yd[k] = if mk[k] { depth[img][(r0 + dr, c0 + dc)] } else { 0.0 };
            }
        }
        let (ni, nd) = (yi.norm(), yd.norm());
        if ni == 0.0 || nd == 0.0 {
            continue;
        }
        yi /= ni;
        yd /= nd;
        found += 1;
    }
    if found < count {
        return Err(Error::Exhausted {
            found,
            wanted: count,
            attempts,
        });
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(r: usize, c: usize, k: f64) -> Matrix {
        Matrix::from_fn(r, c, |i, j| 1.0 + k * i as f64 + (j * j) as f64)
    }

    #[test]
    fn single_position_returns_whole_image() {
        let i = ramp(12, 12, 1.0);
        let d = ramp(12, 12, 2.0);
        let m = Mask::from_element(12, 12, true);
        let b = sample_patches(&[i.clone()], &[d.clone()], &[m], 12, 1, 3).unwrap();
        let row_major = |x: &Matrix| Matrix::from_row_slice(144, 1, x.transpose().as_slice());
        let ei = row_major(&i) / i.norm();
        let ed = row_major(&d) / d.norm();
        assert!((b.yi.column(0) - ei.column(0)).amax() < 1e-15);
        assert!((b.yd.column(0) - ed.column(0)).amax() < 1e-15);
        assert!(b.fully_observed());
    }

    #[test]
    fn fully_masked_depth_is_exhausted() {
        let i = ramp(20, 20, 1.0);
        let m = Mask::from_element(20, 20, false);
        let err = sample_patches(&[i.clone()], &[i], &[m], 8, 5, 1).unwrap_err();
        assert_eq!(
            err,
            Error::Exhausted {
                found: 0,
                wanted: 5,
                attempts: 50
            }
        );
    }

    #[test]
    fn seeded_draws_repeat_and_normalize() {
        let i = ramp(30, 25, 0.5);
        let d = ramp(30, 25, 3.0);
        let m = Mask::from_fn(30, 25, |r, c| (r + c) % 3 != 0);
        let b1 = sample_patches(&[i.clone()], &[d.clone()], &[m.clone()], 6, 40, 9).unwrap();
        let b2 = sample_patches(&[i.clone()], &[d.clone()], &[m.clone()], 6, 40, 9).unwrap();
        assert_eq!(b1, b2);
        let b3 = sample_patches(&[i], &[d], &[m], 6, 40, 10).unwrap();
        assert_ne!(b1, b3);
        for j in 0..40 {
            assert!((b1.yi.column(j).norm() - 1.0).abs() < 1e-12);
            assert!((b1.yd.column(j).norm() - 1.0).abs() < 1e-12);
            for k in 0..36 {
                if !b1.masks[(k, j)] {
                    assert_eq!(b1.yd[(k, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn half_missing_patches_are_rejected() {
        // Left half observed: any 4x4 patch straddling the boundary keeps it,
        // patches entirely on the right are rejected.
        let i = ramp(4, 12, 1.0);
        let m = Mask::from_fn(4, 12, |_, c| c < 6);
        let b = sample_patches(&[i.clone()], &[i], &[m], 4, 30, 2).unwrap();
        for j in 0..30 {
            assert!(2 * b.masks.column(j).iter().filter(|&&v| v).count() >= 16);
        }
    }
}
