//! Depth inpainting from a sparse random subset of depth pixels plus the full
//! intensity image: JBP and GL patch-wise, and TV on depth alone.
//!
//! Patch methods run on overlapping tiles (stride half a patch, plus a last
//! row and column of tiles flush with the border) and average the tile
//! reconstructions with uniform weights. Depth patches are coded around
//! their mean, which a relative error ball on raw depth would otherwise
//! swamp: training patches are centred exactly, test tiles on the mean of
//! their observed pixels. Each tile's intensity is scaled to unit norm; its
//! centred depth is scaled by the full-patch norm estimated from the
//! observed pixels, and the depth ball shrinks with the observed fraction.
//! A tile whose observed depth is flat returns that level. Tiles without
//! observed depth carry no depth information and are left out; pixels no
//! tile covers take the nearest observed value. Observed depth pixels are
//! copied into every output.

use rand::Rng;
use rayon::prelude::*;

use jointsparse::baselines::{nearest_fill, solve_gl, spectral_norm, tv_inpaint, GlOptions, TvOptions};
use jointsparse::jbp::{solve, JbpProblem, SolveStatus, SolverOptions};
use jointsparse::learning::{learn, whiten, Inference, LearnConfig, PatchBatch, TrainingSet};
use jointsparse::rng::{self, Purpose};
use jointsparse::{DictionaryPair, Mask, Matrix, Vector};

use super::{calibrate_gl_lambda, jbp_code, residual, table};
use crate::config::InpaintConfig;
use crate::csv::Table;
use crate::error::{HarnessError, Result};
use crate::io::{read_matrix, read_pgm};
use crate::scene::{mask_random, synthetic_scene};

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintOutput {
    pub table: Table,
    pub depth: Matrix,
    pub mask: Mask,
    pub jbp: Matrix,
    pub gl: Matrix,
    pub tv: Matrix,
}

fn starts(len: usize, p: usize) -> Vec<usize> {
    let stride = (p / 2).max(1);
    let mut v: Vec<usize> = (0..=len - p).step_by(stride).collect();
    if *v.last().unwrap() != len - p {
        v.push(len - p);
    }
    v
}

/// Row-major patch vector.
fn patch(img: &Matrix, r0: usize, c0: usize, p: usize) -> Vector {
    Vector::from_fn(p * p, |k, _| img[(r0 + k / p, c0 + k % p)])
}

enum Method<'a> {
    Jbp { eta: f64 },
    Gl(&'a GlOptions),
}

/// Tile-averaged depth estimate; `None` where no tile contributed.
fn tile_inpaint(
    intensity: &Matrix,
    depth: &Matrix,
    mask: &Mask,
    dicts: &DictionaryPair,
    p: usize,
    method: &Method<'_>,
) -> Result<Matrix> {
    let (h, w) = depth.shape();
    let tiles: Vec<(usize, usize)> = starts(h, p)
        .into_iter()
        .flat_map(|r| starts(w, p).into_iter().map(move |c| (r, c)))
        .collect();
    let coded: Vec<Option<Vector>> = tiles
        .par_iter()
        .map(|&(r0, c0)| {
            let m: Vec<bool> = (0..p * p).map(|k| mask[(r0 + k / p, c0 + k % p)]).collect();
            let observed = m.iter().filter(|&&v| v).count();
            if observed == 0 {
                return Ok(None);
            }
            let yi = patch(intensity, r0, c0, p);
            let si = yi.norm();
            let yi = if si > 0.0 { yi / si } else { yi };
            let frac = observed as f64 / (p * p) as f64;
            let d = patch(depth, r0, c0, p);
            let level = m.iter().zip(d.iter()).filter(|(&k, _)| k).map(|(_, v)| v).sum::<f64>() / observed as f64;
            let yd = Vector::from_fn(p * p, |k, _| if m[k] { d[k] - level } else { 0.0 });
            let sd = yd.norm() / frac.sqrt();
            if sd <= 1e-12 * level.abs().max(1.0) {
                return Ok(Some(Vector::from_element(p * p, level)));
            }
            let yd = yd / sd;
            let b = match method {
                Method::Jbp { eta } => {
                    let mut prob = JbpProblem::new(&yi, &yd, &dicts.phi_i, &dicts.phi_d, *eta, 1.0).with_mask(&m);
                    prob.eps_d = eta * frac.sqrt();
                    let sol = solve(&prob, &SolverOptions::default())?;
                    if sol.status != SolveStatus::Optimal {
                        return Ok(None);
                    }
                    sol.code.b
                }
                Method::Gl(opts) => solve_gl(&yi, &yd, dicts, opts, Some(&m))?.b,
            };
            Ok(Some((&dicts.phi_d * b * sd).add_scalar(level)))
        })
        .collect::<jointsparse::Result<_>>()?;

    let mut sum = Matrix::zeros(h, w);
    let mut count = Matrix::zeros(h, w);
    for (&(r0, c0), rec) in tiles.iter().zip(&coded) {
        if let Some(v) = rec {
            for k in 0..p * p {
                sum[(r0 + k / p, c0 + k % p)] += v[k];
                count[(r0 + k / p, c0 + k % p)] += 1.0;
            }
        }
    }
    let fallback = nearest_fill(depth, mask)?;
    Ok(Matrix::from_fn(h, w, |i, j| {
        if mask[(i, j)] {
            depth[(i, j)]
        } else if count[(i, j)] > 0.0 {
            sum[(i, j)] / count[(i, j)]
        } else {
            fallback[(i, j)]
        }
    }))
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm_squared() / a.len() as f64
}

/// Whitened intensity (spectrally flattened) for patch coding.
fn whitened(img: &Matrix) -> Result<Matrix> {
    Ok(whiten(std::slice::from_ref(img))?.0.remove(0))
}

/// Patch pairs sampled once from the training scenes; learning draws its
/// minibatches from this pool.
const TRAINING_POOL: usize = 4000;
const CALIBRATION_PATCHES: usize = 200;

/// Unit-norm intensity patches paired with unit-norm mean-free depth patches
/// from uniformly drawn positions. Positions whose centred depth vanishes
/// are redrawn.
pub fn training_patches(
    intensity: &[Matrix],
    depth: &[Matrix],
    p: usize,
    count: usize,
    seed: u64,
) -> Result<PatchBatch> {
    let mut r = rng::stream(seed, Purpose::Patches, 0);
    let mut yi = Matrix::zeros(p * p, count);
    let mut yd = Matrix::zeros(p * p, count);
    let mut found = 0;
    for _ in 0..10 * count {
        if found == count {
            break;
        }
        let img = r.random_range(0..intensity.len());
        let (h, w) = depth[img].shape();
        let (r0, c0) = (r.random_range(0..=h - p), r.random_range(0..=w - p));
        let pi = patch(&intensity[img], r0, c0, p);
        let pd = patch(&depth[img], r0, c0, p);
        let pd = pd.add_scalar(-pd.mean());
        let (ni, nd) = (pi.norm(), pd.norm());
        if ni <= 1e-12 || nd <= 1e-12 {
            continue;
        }
        yi.set_column(found, &(pi / ni));
        yd.set_column(found, &(pd / nd));
        found += 1;
    }
    if found == 0 {
        return Err(jointsparse::Error::Exhausted {
            wanted: count,
            found,
            attempts: 10 * count,
        }
        .into());
    }
    Ok(PatchBatch::from_signals(
        yi.columns(0, found).into_owned(),
        yd.columns(0, found).into_owned(),
    )?)
}

struct Dictionaries {
    jbp: DictionaryPair,
    gl: DictionaryPair,
    gl_lambda: f64,
    source: &'static str,
}

fn dictionaries(cfg: &InpaintConfig, seed: u64) -> Result<Dictionaries> {
    let p2 = cfg.patch_size * cfg.patch_size;
    if let (Some(pi), Some(pd)) = (&cfg.dict_intensity, &cfg.dict_depth) {
        let dicts = DictionaryPair::new(read_matrix(pi)?, read_matrix(pd)?)?;
        if dicts.phi_i.nrows() != p2 || dicts.phi_d.nrows() != p2 {
            return Err(HarnessError::MissingDictionary(format!(
                "dictionaries do not have {p2} rows"
            )));
        }
        let gl_lambda = cfg
            .gl_lambda
            .ok_or_else(|| HarnessError::Config("gl_lambda is required with given dictionaries".into()))?;
        return Ok(Dictionaries {
            jbp: dicts.clone(),
            gl: dicts,
            gl_lambda,
            source: "file",
        });
    }
    let mut intensity = Vec::new();
    let mut depth = Vec::new();
    for k in 0..cfg.train_scenes {
        let (i, d) = synthetic_scene(
            cfg.height,
            cfg.width,
            rng::derive_seed(seed, Purpose::Scene, 1 + k as u64),
        );
        intensity.push(whitened(&i)?);
        depth.push(d);
    }
    let pool = training_patches(
        &intensity,
        &depth,
        cfg.patch_size,
        TRAINING_POOL,
        rng::derive_seed(seed, Purpose::Patches, 0),
    )?;
    let data = TrainingSet::Signals(&pool);
    let base = LearnConfig {
        patch_size: cfg.patch_size,
        atoms: cfg.atoms,
        batch_size: cfg.learn_batch,
        n_iterations: cfg.learn_iterations,
        eta: cfg.eta,
        rho: cfg.rho,
        seed: rng::derive_seed(seed, Purpose::Init, 0),
        solver: SolverOptions {
            gap_tol: cfg.jbp_gap,
            ..SolverOptions::default()
        },
        ..LearnConfig::default()
    };
    let (jbp, _) = learn(
        &data,
        &LearnConfig {
            inference: Inference::Jbp,
            ..base.clone()
        },
    )?;
    let gl_lambda = match cfg.gl_lambda {
        Some(l) => l,
        None => {
            // Same average reconstruction error as JBP on training patches.
            // Patches JBP cannot code within the bound are skipped, as in learning.
            let candidates: Vec<(Vector, Vector)> = (0..CALIBRATION_PATCHES.min(pool.len()))
                .map(|j| (pool.yi.column(j).into_owned(), pool.yd.column(j).into_owned()))
                .collect();
            let coded: Vec<Option<f64>> = candidates
                .par_iter()
                .enumerate()
                .map(|(j, (yi, yd))| match jbp_code(&jbp, yi, yd, cfg.eta, j as u64) {
                    Ok((a, b)) => Ok(Some(residual(&jbp, yi, yd, &a, &b))),
                    Err(HarnessError::Trial {
                        source: jointsparse::Error::Infeasible { .. },
                        ..
                    }) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?;
            let (signals, res): (Vec<_>, Vec<f64>) = candidates
                .into_iter()
                .zip(coded)
                .filter_map(|(s, r)| r.map(|r| (s, r)))
                .unzip();
            if res.is_empty() {
                return Err(jointsparse::Error::Infeasible { slack: 0.0 }.into());
            }
            let target = res.iter().sum::<f64>() / res.len() as f64;
            calibrate_gl_lambda(&jbp, &signals, target, 0.05)?.0
        }
    };
    let (gl, _) = learn(
        &data,
        &LearnConfig {
            inference: Inference::Gl,
            gl_lambda,
            ..base
        },
    )?;
    Ok(Dictionaries {
        jbp,
        gl,
        gl_lambda,
        source: "learned",
    })
}

/// Columns `keep_fraction, mse_jbp, mse_gl, mse_tv`, on depth scaled to `[0, 1]`.
pub fn run_inpaint(cfg: &InpaintConfig, seed: u64, hash: &str) -> Result<InpaintOutput> {
    cfg.validate()?;
    let (intensity, depth) = match (&cfg.intensity, &cfg.depth) {
        (Some(pi), Some(pd)) => {
            let (i, d) = (read_pgm(pi)?, read_pgm(pd)?);
            if i.pixels.shape() != d.pixels.shape() {
                return Err(jointsparse::Error::DimensionMismatch("intensity and depth sizes differ".into()).into());
            }
            (i.pixels / i.maxval as f64, d.pixels / d.maxval as f64)
        }
        _ => synthetic_scene(cfg.height, cfg.width, rng::derive_seed(seed, Purpose::Scene, 0)),
    };
    let (h, w) = depth.shape();
    let mask = mask_random(h, w, cfg.keep_fraction, rng::derive_seed(seed, Purpose::Mask, 0));
    let dicts = dictionaries(cfg, seed)?;
    let white = whitened(&intensity)?;
    let p = cfg.patch_size;

    let jbp = tile_inpaint(&white, &depth, &mask, &dicts.jbp, p, &Method::Jbp { eta: cfg.eta })?;
    let gl_opts = GlOptions {
        step: Some(
            1.0 / spectral_norm(&dicts.gl.phi_i)
                .powi(2)
                .max(spectral_norm(&dicts.gl.phi_d).powi(2)),
        ),
        ..GlOptions::new(dicts.gl_lambda)
    };
    let gl = tile_inpaint(&white, &depth, &mask, &dicts.gl, p, &Method::Gl(&gl_opts))?;
    let tv = tv_inpaint(
        &depth,
        &mask,
        &TvOptions {
            weight: cfg.tv_weight,
            max_iter: cfg.tv_iters,
            tol: 1e-6,
        },
    )?;

    let mut t = table(&["keep_fraction", "mse_jbp", "mse_gl", "mse_tv"], hash, seed);
    t.meta("patch", p);
    t.meta("stride", (p / 2).max(1));
    t.meta("aggregation", "uniform_mean");
    t.meta("dictionaries", dicts.source);
    t.meta("gl_lambda", format!("{:.6e}", dicts.gl_lambda));
    t.meta("observed", mask.iter().filter(|&&m| m).count());
    t.rows.push(vec![
        cfg.keep_fraction,
        mse(&jbp, &depth),
        mse(&gl, &depth),
        mse(&tv, &depth),
    ]);
    Ok(InpaintOutput {
        table: t,
        depth,
        mask,
        jbp,
        gl,
        tv,
    })
}
