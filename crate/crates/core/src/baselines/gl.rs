//! Group lasso over atom pairs (GL-ID):
//!
//! ```text
//! min |y_i - Phi_i a|^2 + |M (y_d - Phi_d b)|^2 + lambda sum_k sqrt(a_k^2 + b_k^2)
//! ```
//!
//! Solved by accelerated proximal gradient with objective-based restart. The
//! data terms carry no 1/2, so after halving the whole objective the smooth
//! part has gradient `Phi^T (Phi a - y)` and each prox step thresholds pair
//! norms by `step * lambda / 2`.

use crate::error::{Error, Result};
use crate::model::{DictionaryPair, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlOptions {
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the step `|z_k+1 - z_k|` is below `rel_tol * max(1, |z|)`.
    pub rel_tol: f64,
    /// Gradient step on the halved objective. `None` uses `1 / L` with `L` the
    /// larger squared spectral norm of the two dictionaries.
    pub step: Option<f64>,
}

impl GlOptions {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            max_iter: 10_000,
            rel_tol: 1e-8,
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlResult {
    pub a: Vector,
    pub b: Vector,
    pub objective: f64,
    pub iterations: usize,
    /// False when `rel_tol` was not reached within `max_iter`.
    pub converged: bool,
}

/// Largest singular value by power iteration on `M^T M` (50 iterations,
/// relative tolerance 1e-10).
pub fn spectral_norm(m: &Matrix) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to structured matrices.
    let mut v = Vector::from_fn(n, |k, _| 1.0 + 0.37 * ((k * 7919) % 101) as f64 / 101.0);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..50 {
        let w = m.tr_mul(&(m * &v));
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        let done = (next - est).abs() <= 1e-10 * next;
        est = next;
        if done {
            break;
        }
    }
    est.sqrt()
}

/// Depth dictionary and signal with unobserved rows zeroed.
fn masked(phi: &Matrix, y: &Vector, mask: Option<&[bool]>) -> Result<(Matrix, Vector)> {
    match mask {
        None => Ok((phi.clone(), y.clone())),
        Some(m) => {
            if m.len() != y.len() {
                return Err(Error::DimensionMismatch(format!(
                    "depth mask has {} entries, signal has {}",
                    m.len(),
                    y.len()
                )));
            }
            let mut phi = phi.clone();
            let mut y = y.clone();
            for (r, &keep) in m.iter().enumerate() {
                if !keep {
                    phi.row_mut(r).fill(0.0);
                    y[r] = 0.0;
                }
            }
            Ok((phi, y))
        }
    }
}

/// The GL-ID objective exactly as minimized (no 1/2 on the data terms).
pub fn gl_objective(
    y_i: &Vector,
    y_d: &Vector,
    dicts: &DictionaryPair,
    lambda: f64,
    mask_d: Option<&[bool]>,
    a: &Vector,
    b: &Vector,
) -> Result<f64> {
    let (phi_d, y_d) = masked(&dicts.phi_d, y_d, mask_d)?;
    Ok(objective(y_i, &y_d, &dicts.phi_i, &phi_d, lambda, a, b))
}

fn objective(y_i: &Vector, y_d: &Vector, phi_i: &Matrix, phi_d: &Matrix, lambda: f64, a: &Vector, b: &Vector) -> f64 {
    let ri = y_i - phi_i * a;
    let rd = y_d - phi_d * b;
    let groups: f64 = a.iter().zip(b.iter()).map(|(x, y)| x.hypot(*y)).sum();
    ri.norm_squared() + rd.norm_squared() + lambda * groups
}

fn prox(a: &mut Vector, b: &mut Vector, thresh: f64) {
    for k in 0..a.len() {
        let n = a[k].hypot(b[k]);
        let s = if n > thresh { 1.0 - thresh / n } else { 0.0 };
        a[k] *= s;
        b[k] *= s;
    }
}

pub fn solve_gl(
    y_i: &Vector,
    y_d: &Vector,
    dicts: &DictionaryPair,
    opts: &GlOptions,
    mask_d: Option<&[bool]>,
) -> Result<GlResult> {
    if !(opts.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {}",
            opts.lambda
        )));
    }
    let (phi_i, phi_d) = (&dicts.phi_i, &dicts.phi_d);
    if y_i.len() != phi_i.nrows() || y_d.len() != phi_d.nrows() || phi_i.ncols() != phi_d.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "signals {}/{} against dictionaries {}x{} / {}x{}",
            y_i.len(),
            y_d.len(),
            phi_i.nrows(),
            phi_i.ncols(),
            phi_d.nrows(),
            phi_d.ncols()
        )));
    }
    let (phi_d, y_d) = masked(phi_d, y_d, mask_d)?;
    let n = phi_i.ncols();
    let mut lip = match opts.step {
        Some(s) if s > 0.0 => 1.0 / s,
        Some(s) => return Err(Error::InvalidArgument(format!("step must be positive, got {s}"))),
        None => spectral_norm(phi_i).powi(2).max(spectral_norm(&phi_d).powi(2)),
    };
    if lip == 0.0 {
        lip = 1.0;
    }
    let f = |a: &Vector, b: &Vector| objective(y_i, &y_d, phi_i, &phi_d, opts.lambda, a, b);

    let (mut a, mut b) = (Vector::zeros(n), Vector::zeros(n));
    let mut fx = f(&a, &b);
    let (mut ya, mut yb) = (a.clone(), b.clone());
    let mut t: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let tau = 1.0 / lip;
        let ga = phi_i.tr_mul(&(phi_i * &ya - y_i));
        let gb = phi_d.tr_mul(&(&phi_d * &yb - &y_d));
        let mut za = &ya - ga * tau;
        let mut zb = &yb - gb * tau;
        prox(&mut za, &mut zb, tau * opts.lambda / 2.0);
        let fz = f(&za, &zb);
        if fz > fx {
            if t == 1.0 {
                // A plain proximal step from the accepted point went uphill:
                // either the step is too long or we are at rounding level.
                let rise = fz - fx;
                if rise <= 1e-14 * fx.abs().max(1.0) {
                    converged = true;
                    break;
                }
                lip *= 2.0;
            }
            ya.copy_from(&a);
            yb.copy_from(&b);
            t = 1.0;
            continue;
        }
        let step = ((&za - &a).norm_squared() + (&zb - &b).norm_squared()).sqrt();
        let scale = (a.norm_squared() + b.norm_squared()).sqrt().max(1.0);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        ya = &za + (&za - &a) * mom;
        yb = &zb + (&zb - &b) * mom;
        a = za;
        b = zb;
        fx = fz;
        t = t_next;
        if step <= opts.rel_tol * scale {
            converged = true;
            break;
        }
    }
    Ok(GlResult {
        a,
        b,
        objective: fx,
        iterations,
        converged,
    })
}
