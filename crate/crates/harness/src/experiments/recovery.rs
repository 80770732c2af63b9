//! Coefficient recovery of JBP and GL on planted joint-sparse signals versus
//! SNR, next to the average-case recovery bound.

use rayon::prelude::*;

use jointsparse::baselines::{solve_gl, spectral_norm, GlOptions};
use jointsparse::model::{block_dict, delta_estimate, normalize_pair, synthesize, RipMode};
use jointsparse::rng::{self, Purpose};
use jointsparse::theory::{recovery_bound, BoundInputs};
use jointsparse::{DictionaryPair, GroundTruth, SignalPair, Vector};

use super::{jbp_code, residual, table};
use crate::config::RecoveryConfig;
use crate::csv::Table;
use crate::error::{HarnessError, Result};

struct Trial {
    pair: SignalPair,
    truth: GroundTruth,
}

fn relative_error(truth: &GroundTruth, a: &Vector, b: &Vector) -> f64 {
    (a - &truth.a0).norm_squared() / truth.a0.norm_squared() + (b - &truth.b0).norm_squared() / truth.b0.norm_squared()
}

/// Mean GL residual and mean relative error at one `lambda`.
fn gl_pass(
    dicts: &DictionaryPair,
    trials: &[(Vector, Vector)],
    truths: Option<&[GroundTruth]>,
    opts: &GlOptions,
) -> Result<(f64, f64)> {
    let out: Vec<(f64, f64)> = trials
        .par_iter()
        .enumerate()
        .map(|(k, (yi, yd))| {
            let r = solve_gl(yi, yd, dicts, opts, None)?;
            let res = residual(dicts, yi, yd, &r.a, &r.b);
            let err = truths.map_or(0.0, |t| relative_error(&t[k], &r.a, &r.b));
            Ok((res, err))
        })
        .collect::<jointsparse::Result<_>>()?;
    let n = out.len() as f64;
    Ok((
        out.iter().map(|o| o.0).sum::<f64>() / n,
        out.iter().map(|o| o.1).sum::<f64>() / n,
    ))
}

/// Bisection on `log lambda` until the mean GL residual over `signals` is
/// within `tol` (relative) of `target`. Returns the weight and the residual
/// reached.
pub fn calibrate_gl_lambda(
    dicts: &DictionaryPair,
    signals: &[(Vector, Vector)],
    target: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let base = GlOptions {
        step: Some(
            1.0 / spectral_norm(&dicts.phi_i)
                .powi(2)
                .max(spectral_norm(&dicts.phi_d).powi(2)),
        ),
        ..GlOptions::new(1.0)
    };
    let at = |lambda: f64| gl_pass(dicts, signals, None, &GlOptions { lambda, ..base }).map(|r| r.0);
    let (mut lo, mut hi) = (1e-4f64.ln(), 10f64.ln());
    let mut best = (f64::NAN, f64::INFINITY);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let res = at(mid.exp())?;
        if (res / target - 1.0).abs() < (best.1 / target - 1.0).abs() {
            best = (mid.exp(), res);
        }
        if (res / target - 1.0).abs() <= tol {
            break;
        }
        if res < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 / target - 1.0).abs() > tol {
        return Err(HarnessError::Config(format!(
            "GL calibration reached residual {:.4e} for target {target:.4e}",
            best.1
        )));
    }
    Ok(best)
}

/// One CSV row per SNR: `snr, jbp_err, gl_err, bound_M<m>...`.
pub fn run_recovery(cfg: &RecoveryConfig, seed: u64, hash: &str) -> Result<Table> {
    cfg.validate()?;
    let dicts = DictionaryPair::gaussian(
        cfg.rows,
        cfg.rows,
        cfg.atoms,
        rng::derive_seed(seed, Purpose::Dictionary, 0),
    );

    let block = block_dict(&dicts);
    let mut bounds = Vec::with_capacity(cfg.m_values.len());
    for &m in &cfg.m_values {
        let d_m = delta_estimate(&block, m, RipMode::Mean)?.delta;
        let d_mt = delta_estimate(&block, m + cfg.sparsity, RipMode::Mean)?.delta;
        let inputs = BoundInputs {
            eta: cfg.eta,
            gamma: cfg.gamma,
            t0: cfg.sparsity,
            m,
            delta_m: d_m,
            delta_m_t0: d_mt,
            f0: 1.0,
        };
        // A vacuous bound is written as NaN rather than aborting the run.
        bounds.push(recovery_bound(&inputs).unwrap_or(f64::NAN));
    }

    let mut header = vec!["snr".to_string(), "jbp_err".into(), "gl_err".into()];
    header.extend(cfg.m_values.iter().map(|m| format!("bound_M{m}")));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut t = table(&header, hash, seed);
    t.meta("bound", "mean_mode_nonrigorous");
    let mut lambdas = Vec::new();

    for &snr in &cfg.snr_db {
        let trials: Vec<(u64, Trial)> = (0..cfg.trials)
            .map(|k| {
                let s = rng::derive_seed(seed, Purpose::Trial, k as u64);
                let (raw, gt) = synthesize(&dicts, cfg.sparsity, cfg.gamma, snr, s)
                    .map_err(|source| HarnessError::Trial { seed: s, source })?;
                let (pair, si, sd) = normalize_pair(&raw).map_err(|source| HarnessError::Trial { seed: s, source })?;
                let truth = gt.rescaled(1.0 / si, 1.0 / sd);
                Ok((s, Trial { pair, truth }))
            })
            .collect::<Result<_>>()?;

        let jbp: Vec<(f64, f64)> = trials
            .par_iter()
            .map(|(s, tr)| {
                let (a, b) = jbp_code(&dicts, &tr.pair.y_i, &tr.pair.y_d, cfg.eta, *s)?;
                Ok((
                    relative_error(&tr.truth, &a, &b),
                    residual(&dicts, &tr.pair.y_i, &tr.pair.y_d, &a, &b),
                ))
            })
            .collect::<Result<_>>()?;
        let n = jbp.len() as f64;
        let jbp_err = jbp.iter().map(|j| j.0).sum::<f64>() / n;
        let jbp_res = jbp.iter().map(|j| j.1).sum::<f64>() / n;

        let signals: Vec<(Vector, Vector)> = trials
            .iter()
            .map(|(_, tr)| (tr.pair.y_i.clone(), tr.pair.y_d.clone()))
            .collect();
        let truths: Vec<GroundTruth> = trials.iter().map(|(_, tr)| tr.truth.clone()).collect();
        let lambda = match cfg.gl_lambda {
            Some(l) => l,
            None => calibrate_gl_lambda(&dicts, &signals, jbp_res, cfg.calib_tol)?.0,
        };
        let opts = GlOptions {
            step: Some(
                1.0 / spectral_norm(&dicts.phi_i)
                    .powi(2)
                    .max(spectral_norm(&dicts.phi_d).powi(2)),
            ),
            ..GlOptions::new(lambda)
        };
        let (_, gl_err) = gl_pass(&dicts, &signals, Some(&truths), &opts)?;
        lambdas.push(format!("{lambda:.6e}"));

        let mut row = vec![snr, jbp_err, gl_err];
        row.extend(&bounds);
        t.rows.push(row);
    }
    t.meta("gl_lambda", lambdas.join(";"));
    Ok(t)
}
