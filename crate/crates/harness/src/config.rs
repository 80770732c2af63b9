//! Typed experiment configurations read from `key = value` files.
//!
//! Every file needs `experiment` (one of `recovery`, `dict`, `inpaint`) and
//! `seed`; everything else has a default. Keys an experiment does not know
//! are rejected.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::io::{parse_key_values, KeyValues};

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub trials: usize,
    pub snr_db: Vec<f64>,
    pub rows: usize,
    pub atoms: usize,
    pub sparsity: usize,
    pub gamma: f64,
    pub eta: f64,
    pub m_values: Vec<usize>,
    /// Fixed GL weight; calibrated per SNR when absent.
    pub gl_lambda: Option<f64>,
    /// Relative residual mismatch accepted by the GL calibration.
    pub calib_tol: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            snr_db: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            rows: 64,
            atoms: 128,
            sparsity: 10,
            gamma: 0.25,
            eta: 0.1,
            m_values: vec![25, 64],
            gl_lambda: None,
            calib_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictConfig {
    pub rows: usize,
    pub atoms: usize,
    pub sparsities: Vec<usize>,
    pub samples: usize,
    pub snr_db: f64,
    pub gamma: f64,
    pub eta: f64,
    pub rho: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub gl_lambda: Option<f64>,
    pub threshold: f64,
    /// Duality-gap tolerance of the JBP solves inside learning.
    pub jbp_gap: f64,
    /// Skip learning and score the planted dictionaries themselves.
    pub inject_truth: bool,
}

impl Default for DictConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            atoms: 32,
            sparsities: vec![2, 3, 4],
            samples: 2000,
            snr_db: 30.0,
            gamma: 0.25,
            eta: 0.1,
            rho: 1e-3,
            iterations: 200,
            batch_size: 500,
            gl_lambda: None,
            threshold: 0.05,
            jbp_gap: 1e-5,
            inject_truth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintConfig {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub atoms: usize,
    pub keep_fraction: f64,
    pub eta: f64,
    pub gl_lambda: Option<f64>,
    pub tv_weight: f64,
    pub tv_iters: usize,
    pub train_scenes: usize,
    pub learn_iterations: usize,
    pub learn_batch: usize,
    pub rho: f64,
    /// Duality-gap tolerance of the JBP solves inside learning.
    pub jbp_gap: f64,
    /// Optional inputs; a synthetic scene is generated when absent.
    pub intensity: Option<PathBuf>,
    pub depth: Option<PathBuf>,
    /// Optional MAT1 dictionaries used by both patch methods; learned from
    /// synthetic training scenes when absent.
    pub dict_intensity: Option<PathBuf>,
    pub dict_depth: Option<PathBuf>,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            patch_size: 8,
            atoms: 128,
            keep_fraction: 0.04,
            eta: 0.1,
            gl_lambda: None,
            tv_weight: 1.0,
            tv_iters: 2000,
            train_scenes: 4,
            learn_iterations: 8,
            learn_batch: 200,
            rho: 1e-3,
            jbp_gap: 1e-5,
            intensity: None,
            depth: None,
            dict_intensity: None,
            dict_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Recovery(RecoveryConfig),
    Dict(DictConfig),
    Inpaint(InpaintConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

/// Consumes typed values from a [`KeyValues`] and remembers which keys were used.
struct Fields<'a> {
    kv: &'a KeyValues,
    path: &'a Path,
    used: BTreeSet<&'static str>,
}

impl<'a> Fields<'a> {
    fn raw(&mut self, key: &'static str) -> Option<(&'a str, usize)> {
        self.used.insert(key);
        self.kv.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn parse_one<T: FromStr>(&self, key: &str, v: &str, line: usize) -> Result<T> {
        v.parse()
            .map_err(|_| HarnessError::parse(self.path, line, format!("cannot parse `{v}` for key `{key}`")))
    }

    fn required<T: FromStr>(&mut self, key: &'static str) -> Result<T> {
        match self.raw(key) {
            Some((v, l)) => self.parse_one(key, v, l),
            None => Err(HarnessError::parse(
                self.path,
                0,
                format!("missing required key `{key}`"),
            )),
        }
    }

    fn or<T: FromStr>(&mut self, key: &'static str, default: T) -> Result<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn opt<T: FromStr>(&mut self, key: &'static str) -> Result<Option<T>> {
        match self.raw(key) {
            Some((v, l)) => self.parse_one(key, v, l).map(Some),
            None => Ok(None),
        }
    }

    fn list<T: FromStr>(&mut self, key: &'static str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, l)) => v
                .split(',')
                .map(|t| self.parse_one(key, t.trim(), l))
                .collect::<Result<Vec<T>>>(),
        }
    }

    fn finish(self) -> Result<()> {
        for (k, (_, line)) in &self.kv.entries {
            if !self.used.contains(k.as_str()) {
                return Err(HarnessError::parse(self.path, *line, format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Config(what.to_string()))
    }
}

impl RecoveryConfig {
    fn read(f: &mut Fields<'_>) -> Result<Self> {
        let d = Self::default();
        let c = Self {
            trials: f.or("trials", d.trials)?,
            snr_db: f.list("snr_db", d.snr_db)?,
            rows: f.or("rows", d.rows)?,
            atoms: f.or("atoms", d.atoms)?,
            sparsity: f.or("sparsity", d.sparsity)?,
            gamma: f.or("gamma", d.gamma)?,
            eta: f.or("eta", d.eta)?,
            m_values: f.list("m_values", d.m_values)?,
            gl_lambda: f.opt("gl_lambda")?,
            calib_tol: f.or("calib_tol", d.calib_tol)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.trials > 0, "trials must be positive")?;
        check(!self.snr_db.is_empty(), "snr_db must list at least one value")?;
        check(self.rows > 0 && self.atoms > 0, "rows and atoms must be positive")?;
        check(
            self.sparsity > 0 && self.sparsity <= self.atoms,
            "sparsity must lie in 1..=atoms",
        )?;
        check((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)")?;
        check(self.eta > 0.0 && self.eta < 1.0, "eta must lie in (0, 1)")?;
        check(
            !self.m_values.is_empty() && self.m_values.iter().all(|&m| m > 0),
            "m_values must be positive",
        )?;
        check(self.gl_lambda.is_none_or(|l| l > 0.0), "gl_lambda must be positive")?;
        check(self.calib_tol > 0.0, "calib_tol must be positive")
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("trials", self.trials.to_string()),
            ("snr_db", join(&self.snr_db)),
            ("rows", self.rows.to_string()),
            ("atoms", self.atoms.to_string()),
            ("sparsity", self.sparsity.to_string()),
            ("gamma", self.gamma.to_string()),
            ("eta", self.eta.to_string()),
            ("m_values", join(&self.m_values)),
            ("gl_lambda", opt(&self.gl_lambda)),
            ("calib_tol", self.calib_tol.to_string()),
        ]
    }
}

impl DictConfig {
    fn read(f: &mut Fields<'_>) -> Result<Self> {
        let d = Self::default();
        let c = Self {
            rows: f.or("rows", d.rows)?,
            atoms: f.or("atoms", d.atoms)?,
            sparsities: f.list("sparsities", d.sparsities)?,
            samples: f.or("samples", d.samples)?,
            snr_db: f.or("snr_db", d.snr_db)?,
            gamma: f.or("gamma", d.gamma)?,
            eta: f.or("eta", d.eta)?,
            rho: f.or("rho", d.rho)?,
            iterations: f.or("iterations", d.iterations)?,
            batch_size: f.or("batch_size", d.batch_size)?,
            gl_lambda: f.opt("gl_lambda")?,
            threshold: f.or("threshold", d.threshold)?,
            jbp_gap: f.or("jbp_gap", d.jbp_gap)?,
            inject_truth: f.or("inject_truth", d.inject_truth)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.rows > 0 && self.atoms > 0, "rows and atoms must be positive")?;
        check(!self.sparsities.is_empty(), "sparsities must list at least one value")?;
        check(
            self.sparsities.iter().all(|&s| s > 0 && s <= self.atoms),
            "every sparsity must lie in 1..=atoms",
        )?;
        check(
            self.samples > 0 && self.batch_size > 0,
            "samples and batch_size must be positive",
        )?;
        check((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)")?;
        check(self.eta > 0.0 && self.eta < 1.0, "eta must lie in (0, 1)")?;
        check(self.rho >= 0.0, "rho must be non-negative")?;
        check(self.gl_lambda.is_none_or(|l| l > 0.0), "gl_lambda must be positive")?;
        check(self.threshold > 0.0, "threshold must be positive")?;
        check(self.jbp_gap > 0.0, "jbp_gap must be positive")
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("rows", self.rows.to_string()),
            ("atoms", self.atoms.to_string()),
            ("sparsities", join(&self.sparsities)),
            ("samples", self.samples.to_string()),
            ("snr_db", self.snr_db.to_string()),
            ("gamma", self.gamma.to_string()),
            ("eta", self.eta.to_string()),
            ("rho", self.rho.to_string()),
            ("iterations", self.iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("gl_lambda", opt(&self.gl_lambda)),
            ("threshold", self.threshold.to_string()),
            ("jbp_gap", self.jbp_gap.to_string()),
            ("inject_truth", self.inject_truth.to_string()),
        ]
    }
}

impl InpaintConfig {
    fn read(f: &mut Fields<'_>) -> Result<Self> {
        let d = Self::default();
        let c = Self {
            width: f.or("width", d.width)?,
            height: f.or("height", d.height)?,
            patch_size: f.or("patch_size", d.patch_size)?,
            atoms: f.or("atoms", d.atoms)?,
            keep_fraction: f.or("keep_fraction", d.keep_fraction)?,
            eta: f.or("eta", d.eta)?,
            gl_lambda: f.opt("gl_lambda")?,
            tv_weight: f.or("tv_weight", d.tv_weight)?,
            tv_iters: f.or("tv_iters", d.tv_iters)?,
            train_scenes: f.or("train_scenes", d.train_scenes)?,
            learn_iterations: f.or("learn_iterations", d.learn_iterations)?,
            learn_batch: f.or("learn_batch", d.learn_batch)?,
            rho: f.or("rho", d.rho)?,
            jbp_gap: f.or("jbp_gap", d.jbp_gap)?,
            intensity: f.opt("intensity")?,
            depth: f.opt("depth")?,
            dict_intensity: f.opt("dict_intensity")?,
            dict_depth: f.opt("dict_depth")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.patch_size >= 2, "patch_size must be at least 2")?;
        check(
            self.width >= self.patch_size && self.height >= self.patch_size,
            "image must be at least one patch wide and high",
        )?;
        check(self.atoms > 0, "atoms must be positive")?;
        check(
            self.keep_fraction > 0.0 && self.keep_fraction <= 1.0,
            "keep_fraction must lie in (0, 1]",
        )?;
        check(self.eta > 0.0 && self.eta < 1.0, "eta must lie in (0, 1)")?;
        check(self.gl_lambda.is_none_or(|l| l > 0.0), "gl_lambda must be positive")?;
        check(self.tv_weight > 0.0, "tv_weight must be positive")?;
        check(
            self.train_scenes > 0 && self.learn_batch > 0,
            "train_scenes and learn_batch must be positive",
        )?;
        check(self.rho >= 0.0, "rho must be non-negative")?;
        check(self.jbp_gap > 0.0, "jbp_gap must be positive")?;
        check(
            self.intensity.is_some() == self.depth.is_some(),
            "intensity and depth images must be given together",
        )?;
        check(
            self.dict_intensity.is_some() == self.dict_depth.is_some(),
            "dict_intensity and dict_depth must be given together",
        )
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        vec![
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("atoms", self.atoms.to_string()),
            ("keep_fraction", self.keep_fraction.to_string()),
            ("eta", self.eta.to_string()),
            ("gl_lambda", opt(&self.gl_lambda)),
            ("tv_weight", self.tv_weight.to_string()),
            ("tv_iters", self.tv_iters.to_string()),
            ("train_scenes", self.train_scenes.to_string()),
            ("learn_iterations", self.learn_iterations.to_string()),
            ("learn_batch", self.learn_batch.to_string()),
            ("rho", self.rho.to_string()),
            ("jbp_gap", self.jbp_gap.to_string()),
            ("intensity", path(&self.intensity)),
            ("depth", path(&self.depth)),
            ("dict_intensity", path(&self.dict_intensity)),
            ("dict_depth", path(&self.dict_depth)),
        ]
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let kv = parse_key_values(text, path)?;
        let mut f = Fields {
            kv: &kv,
            path,
            used: BTreeSet::new(),
        };
        let name: String = f.required("experiment")?;
        let seed: u64 = f.required("seed")?;
        let out: Option<PathBuf> = f.opt("out")?;
        let experiment = match name.as_str() {
            "recovery" => Experiment::Recovery(RecoveryConfig::read(&mut f)?),
            "dict" => Experiment::Dict(DictConfig::read(&mut f)?),
            "inpaint" => Experiment::Inpaint(InpaintConfig::read(&mut f)?),
            other => {
                let line = kv.entries["experiment"].1;
                return Err(HarnessError::parse(path, line, format!("unknown experiment `{other}`")));
            }
        };
        f.finish()?;
        Ok(Self { experiment, seed, out })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (_, text) = crate::io::read_key_values(path)?;
        Self::parse(&text, path)
    }

    pub fn name(&self) -> &'static str {
        match self.experiment {
            Experiment::Recovery(_) => "recovery",
            Experiment::Dict(_) => "dict",
            Experiment::Inpaint(_) => "inpaint",
        }
    }

    /// Every effective setting (defaults included, output directory and seed
    /// excluded) as sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        let mut pairs = match &self.experiment {
            Experiment::Recovery(c) => c.pairs(),
            Experiment::Dict(c) => c.pairs(),
            Experiment::Inpaint(c) => c.pairs(),
        };
        pairs.push(("experiment", self.name().to_string()));
        pairs.sort();
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
