//! Total-variation inpainting: minimize isotropic TV subject to agreement with
//! the observed pixels, by a first-order primal-dual iteration.
//!
//! Gradients are forward differences with a Neumann boundary (the difference
//! across the last row or column is zero).

use crate::error::{Error, Result};
use crate::model::{Mask, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvOptions {
    /// Radius of the dual ball, i.e. the TV weight. With hard data constraints
    /// it only changes the balance of the primal and dual steps.
    pub weight: f64,
    pub max_iter: usize,
    /// Stop once the RMS primal update is below `tol * max(1, range)`, with
    /// `range` the spread of the observed values.
    pub tol: f64,
}

impl Default for TvOptions {
    fn default() -> Self {
        Self {
            weight: 1.0,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

fn grad(u: &Matrix) -> (Matrix, Matrix) {
    let (r, c) = u.shape();
    let gx = Matrix::from_fn(r, c, |i, j| if j + 1 < c { u[(i, j + 1)] - u[(i, j)] } else { 0.0 });
    let gy = Matrix::from_fn(r, c, |i, j| if i + 1 < r { u[(i + 1, j)] - u[(i, j)] } else { 0.0 });
    (gx, gy)
}

/// Negative adjoint of [`grad`].
fn div(px: &Matrix, py: &Matrix) -> Matrix {
    let (r, c) = px.shape();
    Matrix::from_fn(r, c, |i, j| {
        let dx = if j + 1 < c { px[(i, j)] } else { 0.0 } - if j > 0 { px[(i, j - 1)] } else { 0.0 };
        let dy = if i + 1 < r { py[(i, j)] } else { 0.0 } - if i > 0 { py[(i - 1, j)] } else { 0.0 };
        dx + dy
    })
}

/// Isotropic discrete TV.
pub fn total_variation(u: &Matrix) -> f64 {
    let (gx, gy) = grad(u);
    gx.zip_map(&gy, |x, y| x.hypot(y)).sum()
}

/// Fill every unobserved pixel with the value of its nearest observed pixel
/// (Euclidean distance, ties to the first in column-major order).
pub fn nearest_fill(image: &Matrix, mask: &Mask) -> Result<Matrix> {
    check(image, mask)?;
    let observed: Vec<(usize, usize)> = (0..image.ncols())
        .flat_map(|j| (0..image.nrows()).map(move |i| (i, j)))
        .filter(|&(i, j)| mask[(i, j)])
        .collect();
    Ok(Matrix::from_fn(image.nrows(), image.ncols(), |i, j| {
        if mask[(i, j)] {
            return image[(i, j)];
        }
        let mut best = (usize::MAX, 0.0);
        for &(oi, oj) in &observed {
            let d = oi.abs_diff(i).pow(2) + oj.abs_diff(j).pow(2);
            if d < best.0 {
                best = (d, image[(oi, oj)]);
            }
        }
        best.1
    }))
}

fn check(image: &Matrix, mask: &Mask) -> Result<()> {
    if image.shape() != mask.shape() {
        return Err(Error::DimensionMismatch(format!(
            "image {:?} vs mask {:?}",
            image.shape(),
            mask.shape()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Returns the lowest-TV feasible iterate seen, starting from the
/// nearest-neighbour fill. Observed pixels are copied from `image` exactly.
pub fn tv_inpaint(image: &Matrix, mask: &Mask, opts: &TvOptions) -> Result<Matrix> {
    check(image, mask)?;
    if !(opts.weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "TV weight must be positive, got {}",
            opts.weight
        )));
    }
    let project = |u: &mut Matrix| {
        for (v, (&m, &f)) in u.iter_mut().zip(mask.iter().zip(image.iter())) {
            if m {
                *v = f;
            }
        }
    };
    let mut u = nearest_fill(image, mask)?;
    if mask.iter().all(|&m| m) {
        return Ok(u);
    }
    let (r, c) = u.shape();
    let observed = image.iter().zip(mask.iter()).filter(|(_, &m)| m).map(|(&v, _)| v);
    let (lo, hi) = observed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let stop = opts.tol * (hi - lo).max(1.0) * ((r * c) as f64).sqrt();
    let mut best_tv = total_variation(&u);
    let mut best = u.clone();
    let mut bar = u.clone();
    let (mut px, mut py) = (Matrix::zeros(r, c), Matrix::zeros(r, c));
    // |grad|^2 <= 8 on the grid.
    let tau = 0.99 / 8f64.sqrt();
    let sigma = tau;
    for _ in 0..opts.max_iter {
        let (gx, gy) = grad(&bar);
        px += gx * sigma;
        py += gy * sigma;
        for (x, y) in px.iter_mut().zip(py.iter_mut()) {
            let n = x.hypot(*y);
            if n > opts.weight {
                let s = opts.weight / n;
                *x *= s;
                *y *= s;
            }
        }
        let mut next = &u + div(&px, &py) * tau;
        project(&mut next);
        let change = (&next - &u).norm();
        bar = &next * 2.0 - &u;
        u = next;
        let tv = total_variation(&u);
        if tv < best_tv {
            best_tv = tv;
            best.copy_from(&u);
        }
        if change <= stop {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_mask(r: usize, c: usize, p: f64, seed: u64) -> Mask {
        let mut g = rng::stream(seed, Purpose::Mask, 0);
        let mut m = Mask::from_fn(r, c, |_, _| g.random::<f64>() < p);
        m[(0, 0)] = true;
        m
    }

    #[test]
    fn div_is_negative_adjoint_of_grad() {
        let mut g = rng::stream(1, Purpose::Perturb, 0);
        let u = Matrix::from_fn(5, 7, |_, _| g.random::<f64>());
        let px = Matrix::from_fn(5, 7, |_, _| g.random::<f64>());
        let py = Matrix::from_fn(5, 7, |_, _| g.random::<f64>());
        let (gx, gy) = grad(&u);
        let lhs = gx.dot(&px) + gy.dot(&py);
        let rhs = -u.dot(&div(&px, &py));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn fully_observed_is_identity() {
        let mut g = rng::stream(2, Purpose::Perturb, 0);
        let img = Matrix::from_fn(9, 6, |_, _| g.random::<f64>());
        let out = tv_inpaint(&img, &Mask::from_element(9, 6, true), &TvOptions::default()).unwrap();
        assert!((out - img).amax() <= 1e-10);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Matrix::from_element(10, 10, 3.25);
        let out = tv_inpaint(&img, &random_mask(10, 10, 0.1, 3), &TvOptions::default()).unwrap();
        assert!(out.iter().all(|v| (v - 3.25).abs() <= 1e-10));
    }

    #[test]
    fn band_fill_beats_nearest_neighbour() {
        // Two levels split by a diagonal edge, columns 3 and 4 missing.
        let img = Matrix::from_fn(8, 8, |i, j| if i + j < 8 { 0.0 } else { 1.0 });
        let mask = Mask::from_fn(8, 8, |_, j| j != 3 && j != 4);
        let nn = nearest_fill(&img, &mask).unwrap();
        let out = tv_inpaint(&img, &mask, &TvOptions::default()).unwrap();
        assert!(total_variation(&out) <= total_variation(&nn) + 1e-12);
        for (o, (m, v)) in out.iter().zip(mask.iter().zip(img.iter())) {
            if *m {
                assert_eq!(o, v);
            }
        }
    }

    #[test]
    fn empty_mask_is_rejected() {
        let img = Matrix::zeros(4, 4);
        let err = tv_inpaint(&img, &Mask::from_element(4, 4, false), &TvOptions::default());
        assert_eq!(err, Err(Error::EmptyMask));
    }

    #[test]
    fn nearest_fill_example() {
        let img = Matrix::from_row_slice(1, 5, &[1.0, 0.0, 0.0, 0.0, 5.0]);
        let mask = Mask::from_row_slice(1, 5, &[true, false, false, false, true]);
        let out = nearest_fill(&img, &mask).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 1.0, 1.0, 5.0, 5.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn constant_shift_commutes(seed in 0u64..500, shift in -5.0f64..5.0) {
            let mut g = rng::stream(seed, Purpose::Scene, 0);
            let img = Matrix::from_fn(8, 9, |_, _| g.random::<f64>());
            let mask = random_mask(8, 9, 0.3, seed);
            let opts = TvOptions::default();
            let base = tv_inpaint(&img, &mask, &opts).unwrap();
            let shifted = tv_inpaint(&img.add_scalar(shift), &mask, &opts).unwrap();
            prop_assert!((shifted.add_scalar(-shift) - base).amax() <= 1e-8);
        }
    }
}
