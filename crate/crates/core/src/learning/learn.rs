//! Alternating minimization: sparse inference on a batch with the
//! dictionaries fixed, then a dictionary update with the codes fixed.

use rand::seq::index;
use rayon::prelude::*;

use crate::baselines::{solve_gl, spectral_norm, GlOptions};
use crate::error::{Error, Result};
use crate::jbp::{solve, JbpProblem, SolveStatus, SolverOptions};
use crate::model::{DictionaryPair, Mask, Matrix, Vector};
use crate::rng::{self, Purpose};

use super::patches::{sample_patches, PatchBatch};
use super::update::{update_dictionaries, CgOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inference {
    Jbp,
    Gl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    /// Side of square image patches; unused for signal training sets.
    pub patch_size: usize,
    pub atoms: usize,
    pub batch_size: usize,
    pub n_iterations: usize,
    /// Residual ball radius per unit-norm patch for JBP inference.
    pub eta: f64,
    pub rho: f64,
    pub inference: Inference,
    pub gl_lambda: f64,
    pub cg_max: usize,
    pub cg_tol: f64,
    pub seed: u64,
    pub normalize_atoms: bool,
    /// Interior-point settings for JBP inference.
    pub solver: SolverOptions,
    /// After each update, re-seed atoms that no patch used or that duplicate
    /// an earlier atom with the most expensively coded patches of the batch.
    pub replace_atoms: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            patch_size: 12,
            atoms: 288,
            batch_size: 1000,
            n_iterations: 20,
            eta: 0.1,
            rho: 1e-3,
            inference: Inference::Jbp,
            gl_lambda: 0.3,
            cg_max: 200,
            cg_tol: 1e-9,
            seed: 0,
            normalize_atoms: true,
            solver: SolverOptions::default(),
            replace_atoms: false,
        }
    }
}

impl LearnConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if !(self.rho >= 0.0) {
            return bad(format!("rho must be non-negative, got {}", self.rho));
        }
        if self.atoms == 0 || self.batch_size == 0 {
            return bad("atoms and batch_size must be positive".into());
        }
        if self.inference == Inference::Gl && !(self.gl_lambda > 0.0) {
            return bad(format!("gl_lambda must be positive, got {}", self.gl_lambda));
        }
        Ok(())
    }
}

/// Where training pairs come from.
#[derive(Debug, Clone, Copy)]
pub enum TrainingSet<'a> {
    /// A fixed pool; each iteration draws `batch_size` columns (all of them
    /// when the pool is not larger).
    Signals(&'a PatchBatch),
    /// Aligned images; each iteration samples fresh patches.
    Images {
        intensity: &'a [Matrix],
        depth: &'a [Matrix],
        masks: &'a [Mask],
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Mean over coded patches of `|r_i| + |r_d|` after the dictionary update
    /// and before atom normalization.
    pub residual: f64,
    /// Mean of `sum_k max(|a_k|, |b_k|)` over coded patches.
    pub activity: f64,
    /// Frobenius norm of the change of both dictionaries.
    pub atom_change: f64,
    /// Patches whose inference failed and were left out.
    pub failures: usize,
    /// Atoms re-seeded from patches.
    pub replaced: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearnHistory {
    pub records: Vec<IterationRecord>,
}

/// Codes for a batch; failed columns are zero and listed in `failed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codes {
    pub a: Matrix,
    pub b: Matrix,
    pub failed: Vec<usize>,
}

/// Codes every batch column independently. Columns are solved in parallel and
/// gathered in index order, so the result does not depend on the schedule.
pub fn sparse_codes(batch: &PatchBatch, dicts: &DictionaryPair, cfg: &LearnConfig) -> Codes {
    let n = dicts.atoms();
    let masked = !batch.fully_observed();
    let gl = GlOptions {
        step: Some(
            1.0 / spectral_norm(&dicts.phi_i)
                .powi(2)
                .max(spectral_norm(&dicts.phi_d).powi(2))
                .max(1e-300),
        ),
        ..GlOptions::new(cfg.gl_lambda)
    };
    let solved: Vec<Option<(Vector, Vector)>> = (0..batch.len())
        .into_par_iter()
        .map(|j| {
            let yi = batch.yi.column(j).into_owned();
            let yd = batch.yd.column(j).into_owned();
            let mask = batch.mask_column(j);
            let mask = if masked { Some(mask.as_slice()) } else { None };
            match cfg.inference {
                Inference::Jbp => {
                    let mut p = JbpProblem::new(&yi, &yd, &dicts.phi_i, &dicts.phi_d, cfg.eta, 1.0);
                    p.mask_d = mask;
                    match solve(&p, &cfg.solver) {
                        Ok(s) if s.status == SolveStatus::Optimal => Some((s.code.a, s.code.b)),
                        _ => None,
                    }
                }
                Inference::Gl => solve_gl(&yi, &yd, dicts, &gl, mask).ok().map(|r| (r.a, r.b)),
            }
        })
        .collect();
    let mut codes = Codes {
        a: Matrix::zeros(n, batch.len()),
        b: Matrix::zeros(n, batch.len()),
        failed: Vec::new(),
    };
    for (j, s) in solved.into_iter().enumerate() {
        match s {
            Some((a, b)) => {
                codes.a.set_column(j, &a);
                codes.b.set_column(j, &b);
            }
            None => codes.failed.push(j),
        }
    }
    codes
}

/// Coefficient magnitude below which an atom counts as unused by a patch.
const USE_THRESHOLD: f64 = 1e-3;
/// Stacked-atom cosine above which two atoms count as duplicates.
const DUPLICATE_COS: f64 = 0.99;

fn replace_atoms(dicts: &mut DictionaryPair, batch: &PatchBatch, codes: &Codes, coded: &[usize]) -> usize {
    let n = dicts.atoms();
    let used = |k: usize| {
        coded
            .iter()
            .any(|&j| codes.a[(k, j)].abs().max(codes.b[(k, j)].abs()) > USE_THRESHOLD)
    };
    let stacked = |d: &DictionaryPair, k: usize| {
        let v = Vector::from_iterator(
            d.phi_i.nrows() + d.phi_d.nrows(),
            d.phi_i.column(k).iter().chain(d.phi_d.column(k).iter()).copied(),
        );
        let nv = v.norm();
        v / nv
    };
    let mut stale = Vec::new();
    for k in 0..n {
        let sk = stacked(dicts, k);
        let dup = (0..k).any(|l| !stale.contains(&l) && sk.dot(&stacked(dicts, l)).abs() > DUPLICATE_COS);
        if dup || !used(k) {
            stale.push(k);
        }
    }
    // Most expensive codes first; ties by patch index.
    let cost = |j: usize| -> f64 { (0..n).map(|k| codes.a[(k, j)].abs().max(codes.b[(k, j)].abs())).sum() };
    let mut order: Vec<(f64, usize)> = coded.iter().map(|&j| (cost(j), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut replaced = 0;
    for (&k, &(_, j)) in stale.iter().zip(&order) {
        let (yi, yd) = (batch.yi.column(j), batch.yd.column(j));
        let (ni, nd) = (yi.norm(), yd.norm());
        if ni == 0.0 || nd == 0.0 {
            continue;
        }
        dicts.phi_i.set_column(k, &(yi / ni));
        dicts.phi_d.set_column(k, &(yd / nd));
        replaced += 1;
    }
    replaced
}

fn draw_batch(data: &TrainingSet<'_>, cfg: &LearnConfig, iter: usize) -> Result<PatchBatch> {
    let seed = rng::derive_seed(cfg.seed, Purpose::Patches, iter as u64);
    match *data {
        TrainingSet::Signals(pool) => {
            if pool.len() <= cfg.batch_size {
                return Ok(pool.clone());
            }
            let mut r = rng::stream(seed, Purpose::Patches, 0);
            let mut cols = index::sample(&mut r, pool.len(), cfg.batch_size).into_vec();
            cols.sort_unstable();
            Ok(pool.select(&cols))
        }
        TrainingSet::Images {
            intensity,
            depth,
            masks,
        } => sample_patches(intensity, depth, masks, cfg.patch_size, cfg.batch_size, seed),
    }
}

fn dims(data: &TrainingSet<'_>, cfg: &LearnConfig) -> Result<(usize, usize)> {
    match *data {
        TrainingSet::Signals(pool) if pool.is_empty() => Err(Error::InvalidArgument("empty training set".into())),
        TrainingSet::Signals(pool) => Ok((pool.yi.nrows(), pool.yd.nrows())),
        TrainingSet::Images { intensity, .. } if intensity.is_empty() => {
            Err(Error::InvalidArgument("empty training set".into()))
        }
        TrainingSet::Images { .. } => Ok((cfg.patch_size * cfg.patch_size, cfg.patch_size * cfg.patch_size)),
    }
}

/// Learns from seeded unit-norm Gaussian dictionaries.
pub fn learn(data: &TrainingSet<'_>, cfg: &LearnConfig) -> Result<(DictionaryPair, LearnHistory)> {
    cfg.validate()?;
    let (rows_i, rows_d) = dims(data, cfg)?;
    let init = DictionaryPair::gaussian(rows_i, rows_d, cfg.atoms, rng::derive_seed(cfg.seed, Purpose::Init, 0));
    learn_from(data, cfg, init)
}

/// Learns starting from `init`.
pub fn learn_from(
    data: &TrainingSet<'_>,
    cfg: &LearnConfig,
    init: DictionaryPair,
) -> Result<(DictionaryPair, LearnHistory)> {
    cfg.validate()?;
    let (rows_i, rows_d) = dims(data, cfg)?;
    if init.phi_i.nrows() != rows_i || init.phi_d.nrows() != rows_d || init.atoms() != cfg.atoms {
        return Err(Error::DimensionMismatch(
            "initial dictionaries do not fit the training set".into(),
        ));
    }
    let cg = CgOptions {
        max_iter: cfg.cg_max,
        tol: cfg.cg_tol,
    };
    let mut dicts = init;
    let mut history = LearnHistory::default();
    for iter in 0..cfg.n_iterations {
        let batch = draw_batch(data, cfg, iter)?;
        let codes = sparse_codes(&batch, &dicts, cfg);
        let coded: Vec<usize> = (0..batch.len())
            .filter(|j| codes.failed.binary_search(j).is_err())
            .collect();
        let raw = update_dictionaries(&batch, &codes.a, &codes.b, &dicts, cfg.rho, &cg, false)?;

        let rd = (&batch.yd - &raw.phi_d * &codes.b).zip_map(&batch.masks, |v, m| if m { v } else { 0.0 });
        let ri = &batch.yi - &raw.phi_i * &codes.a;
        let count = coded.len().max(1) as f64;
        let residual = coded
            .iter()
            .map(|&j| ri.column(j).norm() + rd.column(j).norm())
            .sum::<f64>()
            / count;
        let activity = coded
            .iter()
            .map(|&j| {
                codes
                    .a
                    .column(j)
                    .zip_map(&codes.b.column(j), |x, y| x.abs().max(y.abs()))
                    .sum()
            })
            .sum::<f64>()
            / count;

        let mut next = if cfg.normalize_atoms {
            update_dictionaries(&batch, &codes.a, &codes.b, &dicts, cfg.rho, &cg, true)?
        } else {
            raw
        };
        let replaced = if cfg.replace_atoms {
            replace_atoms(&mut next, &batch, &codes, &coded)
        } else {
            0
        };
        let atom_change =
            ((&next.phi_i - &dicts.phi_i).norm_squared() + (&next.phi_d - &dicts.phi_d).norm_squared()).sqrt();
        history.records.push(IterationRecord {
            residual,
            activity,
            atom_change,
            failures: codes.failed.len(),
            replaced,
        });
        dicts = next;
    }
    Ok((dicts, history))
}
