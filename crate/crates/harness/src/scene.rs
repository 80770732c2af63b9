//! Synthetic depth-intensity scenes and random observation masks.

use rand::seq::index;
use rand::Rng as _;

use jointsparse::rng::{self, Purpose};
use jointsparse::{Mask, Matrix};

/// Exactly `round(keep_fraction * pixels)` observed pixels, chosen uniformly
/// without replacement.
pub fn mask_random(rows: usize, cols: usize, keep_fraction: f64, seed: u64) -> Mask {
    let total = rows * cols;
    let keep = ((keep_fraction * total as f64).round() as usize).min(total);
    let mut r = rng::stream(seed, Purpose::Mask, 0);
    let mut mask = Mask::from_element(rows, cols, false);
    for k in index::sample(&mut r, total, keep) {
        mask[(k / cols, k % cols)] = true;
    }
    mask
}

/// Piecewise-planar depth and a matching intensity image, both in `[0, 1]`.
///
/// A few random lines cut the frame into regions; each region is a slanted
/// plane. Intensity has a per-region albedo, so depth discontinuities are
/// also intensity edges, plus a sinusoidal grating running along the depth
/// iso-lines, so its orientation and frequency follow the plane slopes.
pub fn synthetic_scene(rows: usize, cols: usize, seed: u64) -> (Matrix, Matrix) {
    let mut r = rng::stream(seed, Purpose::Scene, 0);
    let lines = 3;
    // Line through a random interior point with a random normal.
    let cuts: Vec<(f64, f64, f64)> = (0..lines)
        .map(|_| {
            let (px, py) = (r.random::<f64>() * cols as f64, r.random::<f64>() * rows as f64);
            let th = r.random::<f64>() * std::f64::consts::PI;
            let (nx, ny) = (th.cos(), th.sin());
            (nx, ny, -(nx * px + ny * py))
        })
        .collect();
    let regions = 1 << lines;
    let planes: Vec<(f64, f64, f64, f64)> = (0..regions)
        .map(|_| {
            let base = 0.2 + 0.6 * r.random::<f64>();
            let gx = (r.random::<f64>() - 0.5) * 0.6 / cols as f64;
            let gy = (r.random::<f64>() - 0.5) * 0.6 / rows as f64;
            let albedo = 0.2 + 0.6 * r.random::<f64>();
            (base, gx, gy, albedo)
        })
        .collect();
    let region = |i: usize, j: usize| {
        cuts.iter().enumerate().fold(0, |acc, (k, &(nx, ny, c))| {
            acc | (((nx * j as f64 + ny * i as f64 + c) > 0.0) as usize) << k
        })
    };
    let cy = rows as f64 / 2.0;
    let cx = cols as f64 / 2.0;
    let mut depth = Matrix::zeros(rows, cols);
    let mut intensity = Matrix::zeros(rows, cols);
    // Grating period in depth units: a plane sloped by 0.3 over the frame
    // shows a few stripes.
    let stripes = 60.0;
    for i in 0..rows {
        for j in 0..cols {
            let (base, gx, gy, albedo) = planes[region(i, j)];
            let z = base + gx * (j as f64 - cx) + gy * (i as f64 - cy);
            depth[(i, j)] = z;
            intensity[(i, j)] = albedo + 0.15 * (std::f64::consts::TAU * stripes * z).sin();
        }
    }
    let clamp = |m: Matrix| m.map(|v| v.clamp(0.0, 1.0));
    (clamp(intensity), clamp(depth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_counts_are_exact() {
        assert!(mask_random(10, 10, 1.0, 3).iter().all(|&m| m));
        assert_eq!(mask_random(100, 100, 0.04, 1).iter().filter(|&&m| m).count(), 400);
        assert_eq!(mask_random(7, 9, 0.5, 1).iter().filter(|&&m| m).count(), 32);
    }

    #[test]
    fn masks_are_seeded() {
        assert_eq!(mask_random(30, 30, 0.1, 5), mask_random(30, 30, 0.1, 5));
        assert_ne!(mask_random(30, 30, 0.1, 5), mask_random(30, 30, 0.1, 6));
    }

    #[test]
    fn scene_is_bounded_and_seeded() {
        let (i, d) = synthetic_scene(40, 50, 2);
        assert_eq!(i.shape(), (40, 50));
        assert!(i.iter().chain(d.iter()).all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(synthetic_scene(40, 50, 2), (i, d.clone()));
        assert_ne!(synthetic_scene(40, 50, 3).1, d);
    }
}
