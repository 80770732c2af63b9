//! Recovery of a planted dictionary pair by JBP-based and GL-based learning.

use rayon::prelude::*;

use jointsparse::jbp::SolverOptions;
use jointsparse::learning::{learn, match_atoms, Inference, LearnConfig, PatchBatch, TrainingSet};
use jointsparse::model::{normalize_pair, synthesize};
use jointsparse::rng::{self, Purpose};
use jointsparse::{DictionaryPair, Matrix, Vector};

use super::{calibrate_gl_lambda, jbp_code, residual, table};
use crate::config::DictConfig;
use crate::csv::Table;
use crate::error::{HarnessError, Result};

/// Signals used to calibrate the GL weight against the JBP residual.
const CALIBRATION_SIGNALS: usize = 200;

fn training_pool(truth: &DictionaryPair, cfg: &DictConfig, sparsity: usize, seed: u64) -> Result<PatchBatch> {
    let mut yi = Matrix::zeros(cfg.rows, cfg.samples);
    let mut yd = Matrix::zeros(cfg.rows, cfg.samples);
    for j in 0..cfg.samples {
        let s = rng::derive_seed(seed, Purpose::Trial, j as u64);
        let (raw, _) = synthesize(truth, sparsity, cfg.gamma, cfg.snr_db, s)
            .map_err(|source| HarnessError::Trial { seed: s, source })?;
        let (pair, _, _) = normalize_pair(&raw).map_err(|source| HarnessError::Trial { seed: s, source })?;
        yi.set_column(j, &pair.y_i);
        yd.set_column(j, &pair.y_d);
    }
    Ok(PatchBatch::from_signals(yi, yd)?)
}

/// GL weight whose mean residual with the planted dictionaries matches JBP's.
fn matched_lambda(truth: &DictionaryPair, pool: &PatchBatch, eta: f64, seed: u64) -> Result<f64> {
    let n = pool.len().min(CALIBRATION_SIGNALS);
    let signals: Vec<(Vector, Vector)> = (0..n)
        .map(|j| (pool.yi.column(j).into_owned(), pool.yd.column(j).into_owned()))
        .collect();
    let res: Vec<f64> = signals
        .par_iter()
        .enumerate()
        .map(|(j, (yi, yd))| {
            let (a, b) = jbp_code(truth, yi, yd, eta, rng::derive_seed(seed, Purpose::Trial, j as u64))?;
            Ok(residual(truth, yi, yd, &a, &b))
        })
        .collect::<Result<_>>()?;
    let target = res.iter().sum::<f64>() / n as f64;
    Ok(calibrate_gl_lambda(truth, &signals, target, 0.05)?.0)
}

/// One row per sparsity:
/// `sparsity, jbp_mse, jbp_recovered_pct, gl_mse, gl_recovered_pct`.
pub fn run_dict_recovery(cfg: &DictConfig, seed: u64, hash: &str) -> Result<Table> {
    cfg.validate()?;
    let mut t = table(
        &["sparsity", "jbp_mse", "jbp_recovered_pct", "gl_mse", "gl_recovered_pct"],
        hash,
        seed,
    );
    t.meta("mse", "squared_distance_unit_stacked_atoms");
    let mut lambdas = Vec::new();
    for (si, &k) in cfg.sparsities.iter().enumerate() {
        let tag = si as u64;
        let truth = DictionaryPair::gaussian(
            cfg.rows,
            cfg.rows,
            cfg.atoms,
            rng::derive_seed(seed, Purpose::Dictionary, tag),
        );
        let (jbp_dict, gl_dict) = if cfg.inject_truth {
            lambdas.push("none".to_string());
            (truth.clone(), truth.clone())
        } else {
            let pool = training_pool(&truth, cfg, k, rng::derive_seed(seed, Purpose::Trial, tag))?;
            let lambda = match cfg.gl_lambda {
                Some(l) => l,
                None => matched_lambda(&truth, &pool, cfg.eta, seed)?,
            };
            lambdas.push(format!("{lambda:.6e}"));
            let base = LearnConfig {
                atoms: cfg.atoms,
                batch_size: cfg.batch_size,
                n_iterations: cfg.iterations,
                eta: cfg.eta,
                rho: cfg.rho,
                gl_lambda: lambda,
                seed: rng::derive_seed(seed, Purpose::Init, tag),
                solver: SolverOptions {
                    gap_tol: cfg.jbp_gap,
                    ..SolverOptions::default()
                },
                ..LearnConfig::default()
            };
            let data = TrainingSet::Signals(&pool);
            let (jbp_dict, _) = learn(
                &data,
                &LearnConfig {
                    inference: Inference::Jbp,
                    ..base.clone()
                },
            )?;
            let (gl_dict, _) = learn(
                &data,
                &LearnConfig {
                    inference: Inference::Gl,
                    ..base
                },
            )?;
            (jbp_dict, gl_dict)
        };
        let mut row = vec![k as f64];
        for learned in [&jbp_dict, &gl_dict] {
            let m = match_atoms(learned, &truth, cfg.threshold)?;
            row.push(m.mse.iter().sum::<f64>() / m.mse.len() as f64);
            row.push(100.0 * m.recovered as f64 / cfg.atoms as f64);
        }
        t.rows.push(row);
    }
    t.meta("gl_lambda", lambdas.join(";"));
    t.meta("threshold", cfg.threshold);
    Ok(t)
}
