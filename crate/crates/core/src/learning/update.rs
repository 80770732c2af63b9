//! Dictionary update with the codes held fixed: per modality, conjugate
//! gradient on `|W o (Y - Phi C)|_F^2 + rho |Phi|_F^2`, where `W` is the
//! observation mask.

use crate::error::{Error, Result};
use crate::model::{DictionaryPair, Mask, Matrix};

use super::patches::PatchBatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iter: usize,
    /// Stop once `|grad| <= tol * (1 + |grad_0|)`.
    pub tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-9,
        }
    }
}

/// Minimizes one modality's objective starting from `phi`. `y` must already
/// be zero at unobserved entries.
pub fn update_modality(y: &Matrix, c: &Matrix, phi: &Matrix, mask: Option<&Mask>, rho: f64, cg: &CgOptions) -> Matrix {
    let mask = mask.filter(|m| !m.iter().all(|&v| v));
    let gram = c * c.transpose();
    // Half the Hessian applied to a direction.
    let apply = |p: &Matrix| -> Matrix {
        let fit = match mask {
            None => p * &gram,
            Some(m) => (p * c).zip_map(m, |v, keep| if keep { v } else { 0.0 }) * c.transpose(),
        };
        fit + p * rho
    };
    let rhs = y * c.transpose();
    let mut phi = phi.clone();
    let mut r = &rhs - apply(&phi);
    let stop = cg.tol * (1.0 + r.norm());
    let mut d = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..cg.max_iter {
        if rr.sqrt() <= stop {
            break;
        }
        let hd = apply(&d);
        let curv = d.dot(&hd);
        if curv <= 0.0 {
            break;
        }
        let alpha = rr / curv;
        phi += &d * alpha;
        r -= hd * alpha;
        let rr_next = r.norm_squared();
        d = &r + d * (rr_next / rr);
        rr = rr_next;
    }
    phi
}

/// Rescales columns to unit norm. A column that collapsed to zero keeps the
/// corresponding column of `fallback`.
fn normalize_or_keep(phi: &mut Matrix, fallback: &Matrix) {
    for (mut col, old) in phi.column_iter_mut().zip(fallback.column_iter()) {
        let n = col.norm();
        if n > 1e-12 {
            col /= n;
        } else {
            col.copy_from(&old);
        }
    }
}

/// One update of both dictionaries for codes `a` (intensity) and `b` (depth),
/// each `N x J`.
pub fn update_dictionaries(
    batch: &PatchBatch,
    a: &Matrix,
    b: &Matrix,
    dicts: &DictionaryPair,
    rho: f64,
    cg: &CgOptions,
    normalize_atoms: bool,
) -> Result<DictionaryPair> {
    let n = dicts.atoms();
    let j = batch.len();
    if a.shape() != (n, j) || b.shape() != (n, j) {
        return Err(Error::DimensionMismatch(format!(
            "codes {:?} / {:?}, expected {n}x{j}",
            a.shape(),
            b.shape()
        )));
    }
    if batch.yi.nrows() != dicts.phi_i.nrows() || batch.yd.nrows() != dicts.phi_d.nrows() {
        return Err(Error::DimensionMismatch(
            "patch length differs from dictionary rows".into(),
        ));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be non-negative, got {rho}")));
    }
    let mut phi_i = update_modality(&batch.yi, a, &dicts.phi_i, None, rho, cg);
    let mut phi_d = update_modality(&batch.yd, b, &dicts.phi_d, Some(&batch.masks), rho, cg);
    if normalize_atoms {
        normalize_or_keep(&mut phi_i, &dicts.phi_i);
        normalize_or_keep(&mut phi_d, &dicts.phi_d);
    }
    Ok(DictionaryPair { phi_i, phi_d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(r: usize, c: usize, seed: u64) -> Matrix {
        let mut g = rng::stream(seed, Purpose::Perturb, 3);
        Matrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut g))
    }

    fn objective(y: &Matrix, c: &Matrix, phi: &Matrix, rho: f64) -> f64 {
        (y - phi * c).norm_squared() + rho * phi.norm_squared()
    }

    #[test]
    fn matches_ridge_closed_form() {
        for seed in 0..5 {
            let (n, atoms, j) = (9, 14, 60);
            let y = gauss(n, j, seed);
            let c = gauss(atoms, j, seed + 10);
            let phi0 = gauss(n, atoms, seed + 20);
            let rho = 0.1;
            let phi = update_modality(&y, &c, &phi0, None, rho, &CgOptions::default());
            let reg = &c * c.transpose() + Matrix::identity(atoms, atoms) * rho;
            let exact = &y * c.transpose() * reg.try_inverse().unwrap();
            assert!((phi - exact).amax() < 1e-6);
        }
    }

    #[test]
    fn identity_codes_reproduce_signals() {
        let y = gauss(6, 8, 1);
        let phi = update_modality(
            &y,
            &Matrix::identity(8, 8),
            &gauss(6, 8, 2),
            None,
            0.0,
            &CgOptions::default(),
        );
        assert!((phi - y).amax() < 1e-9);
    }

    #[test]
    fn zero_codes_leave_dictionaries_then_normalize() {
        let d = DictionaryPair {
            phi_i: gauss(5, 7, 3) * 3.0,
            phi_d: gauss(5, 7, 4) * 0.5,
        };
        let batch = PatchBatch::from_signals(gauss(5, 10, 5), gauss(5, 10, 6)).unwrap();
        let z = Matrix::zeros(7, 10);
        let raw = update_dictionaries(&batch, &z, &z, &d, 0.0, &CgOptions::default(), false).unwrap();
        assert_eq!(raw, d);
        let out = update_dictionaries(&batch, &z, &z, &d, 0.0, &CgOptions::default(), true).unwrap();
        for k in 0..7 {
            assert!((out.phi_i.column(k).norm() - 1.0).abs() < 1e-12);
            let expect = d.phi_d.column(k) / d.phi_d.column(k).norm();
            assert!((out.phi_d.column(k) - expect).amax() < 1e-15);
        }
    }

    #[test]
    fn masked_update_matches_per_row_ridge() {
        let (n, atoms, j) = (6, 5, 40);
        let c = gauss(atoms, j, 1);
        let mut g = rng::stream(2, Purpose::Mask, 0);
        let mask = Mask::from_fn(n, j, |_, _| g.random::<f64>() < 0.6);
        let y = gauss(n, j, 3).zip_map(&mask, |v, m| if m { v } else { 0.0 });
        let rho = 0.05;
        let phi = update_modality(&y, &c, &gauss(n, atoms, 4), Some(&mask), rho, &CgOptions::default());
        for r in 0..n {
            let keep: Vec<usize> = (0..j).filter(|&k| mask[(r, k)]).collect();
            let cs = c.select_columns(&keep);
            let ys = y.row(r).select_columns(&keep);
            let reg = &cs * cs.transpose() + Matrix::identity(atoms, atoms) * rho;
            let exact = ys * cs.transpose() * reg.try_inverse().unwrap();
            assert!((phi.row(r) - exact).amax() < 1e-6);
        }
    }

    #[test]
    fn never_increases_objective() {
        for seed in 0..10 {
            let y = gauss(8, 30, seed);
            let c = gauss(12, 30, seed + 1);
            let phi0 = gauss(8, 12, seed + 2);
            for iters in [1, 2, 5, 50] {
                let cg = CgOptions {
                    max_iter: iters,
                    tol: 0.0,
                };
                let phi = update_modality(&y, &c, &phi0, None, 0.01, &cg);
                assert!(objective(&y, &c, &phi, 0.01) <= objective(&y, &c, &phi0, 0.01) + 1e-12);
            }
        }
    }
}
