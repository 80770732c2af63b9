//! Spectral flattening of natural images before learning.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::Matrix;

/// Radial filter `H(f) = f exp(-(f / cutoff)^exponent)`, with `f` in cycles
/// per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteningFilter {
    pub cutoff: f64,
    pub exponent: f64,
}

impl Default for WhiteningFilter {
    /// Cutoff at 0.8 of the Nyquist frequency.
    fn default() -> Self {
        Self {
            cutoff: 0.4,
            exponent: 4.0,
        }
    }
}

impl WhiteningFilter {
    pub fn response(&self, f: f64) -> f64 {
        f * (-(f / self.cutoff).powf(self.exponent)).exp()
    }
}

/// Signed frequency of FFT bin `k` out of `n`, in cycles per sample.
fn freq(k: usize, n: usize) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / n as f64
}

fn fft2(planner: &mut FftPlanner<f64>, data: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    // `data` is row-major.
    row_fft.process(data);
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for j in 0..cols {
        for i in 0..rows {
            column[i] = data[i * cols + j];
        }
        col_fft.process(&mut column);
        for i in 0..rows {
            data[i * cols + j] = column[i];
        }
    }
}

fn spectrum(planner: &mut FftPlanner<f64>, img: &Matrix) -> Vec<Complex<f64>> {
    let (r, c) = img.shape();
    let mut data: Vec<Complex<f64>> = (0..r * c).map(|k| Complex::new(img[(k / c, k % c)], 0.0)).collect();
    fft2(planner, &mut data, r, c, false);
    data
}

/// Filters every image with the default [`WhiteningFilter`].
pub fn whiten(images: &[Matrix]) -> Result<(Vec<Matrix>, WhiteningFilter)> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to whiten".into()));
    }
    let filter = WhiteningFilter::default();
    let mut planner = FftPlanner::new();
    let mut out = Vec::with_capacity(images.len());
    for img in images {
        let (r, c) = img.shape();
        if r < 16 || c < 16 {
            return Err(Error::TooSmall {
                rows: r,
                cols: c,
                min: 16,
            });
        }
        let mut data = spectrum(&mut planner, img);
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] *= filter.response(freq(i, r).hypot(freq(j, c)));
            }
        }
        fft2(&mut planner, &mut data, r, c, true);
        let scale = 1.0 / (r * c) as f64;
        out.push(Matrix::from_fn(r, c, |i, j| data[i * c + j].re * scale));
    }
    Ok((out, filter))
}

/// Mean power per integer radial frequency (in cycles per image, using the
/// smaller side), from 0 up to half that side.
pub fn radial_power(img: &Matrix) -> Vec<f64> {
    let (r, c) = img.shape();
    let side = r.min(c) as f64;
    let data = spectrum(&mut FftPlanner::new(), img);
    let bins = r.min(c) / 2 + 1;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for i in 0..r {
        for j in 0..c {
            let k = (freq(i, r).hypot(freq(j, c)) * side).round() as usize;
            if k < bins {
                sum[k] += data[i * c + j].norm_sqr();
                count[k] += 1;
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    /// Random-phase image with amplitude spectrum `1 / f`.
    fn pink(n: usize, seed: u64) -> Matrix {
        let mut g = rng::stream(seed, Purpose::Scene, 0);
        let mut data: Vec<Complex<f64>> = (0..n * n)
            .map(|k| {
                let f = freq(k / n, n).hypot(freq(k % n, n));
                let amp = if f > 0.0 { 1.0 / f } else { 0.0 };
                Complex::from_polar(amp, g.random::<f64>() * std::f64::consts::TAU)
            })
            .collect();
        fft2(&mut FftPlanner::new(), &mut data, n, n, true);
        // Real part of a random-phase field keeps the radial spectrum shape.
        Matrix::from_fn(n, n, |i, j| data[i * n + j].re)
    }

    fn slope(power: &[f64], lo: usize, hi: usize) -> f64 {
        let pts: Vec<(f64, f64)> = (lo..=hi).map(|k| ((k as f64).ln(), power[k].ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn pink_noise_becomes_flat_below_cutoff() {
        let n = 128;
        let img = pink(n, 4);
        let before = radial_power(&img);
        let (out, filter) = whiten(std::slice::from_ref(&img)).unwrap();
        let after = radial_power(&out[0]);
        let top = (0.8 * filter.cutoff * n as f64).floor() as usize;
        let s_before = slope(&before, 1, top);
        let s_after = slope(&after, 1, top);
        assert!(s_before < -1.5, "input slope {s_before}");
        assert!(s_after.abs() <= 0.3, "whitened slope {s_after}");
    }

    #[test]
    fn constant_image_maps_to_zero() {
        let (out, _) = whiten(&[Matrix::from_element(20, 24, 7.0)]).unwrap();
        assert!(out[0].amax() < 1e-12);
    }

    #[test]
    fn white_noise_is_filtered_linearly_and_deterministically() {
        let mut g = rng::stream(1, Purpose::Scene, 1);
        let x = Matrix::from_fn(32, 32, |_, _| StandardNormal.sample(&mut g));
        let y = Matrix::from_fn(32, 32, |_, _| StandardNormal.sample(&mut g));
        let (wx, _) = whiten(&[x.clone()]).unwrap();
        let (wy, _) = whiten(&[y.clone()]).unwrap();
        let (wxy, _) = whiten(&[&x * 2.0 + &y]).unwrap();
        assert!((&wx[0] * 2.0 + &wy[0] - &wxy[0]).amax() < 1e-12);
        assert_eq!(whiten(&[x.clone()]).unwrap().0, wx);
    }

    #[test]
    fn small_images_are_rejected() {
        assert_eq!(
            whiten(&[Matrix::zeros(15, 40)]),
            Err(Error::TooSmall {
                rows: 15,
                cols: 40,
                min: 16
            })
        );
    }
}
