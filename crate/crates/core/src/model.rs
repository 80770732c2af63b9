//! Generative model: dictionary pairs, signal pairs, joint codes, synthetic
//! instances and dictionary geometry (coherence, restricted-isometry estimates).

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Rng};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
/// Pixel mask, `true` where a value is observed.
pub type Mask = DMatrix<bool>;

/// Two dictionaries over one shared atom index set.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryPair {
    pub phi_i: Matrix,
    pub phi_d: Matrix,
}

impl DictionaryPair {
    pub fn new(phi_i: Matrix, phi_d: Matrix) -> Result<Self> {
        if phi_i.ncols() != phi_d.ncols() {
            return Err(Error::SizeMismatch {
                left: phi_i.ncols(),
                right: phi_d.ncols(),
            });
        }
        if phi_i.ncols() == 0 || phi_i.nrows() == 0 || phi_d.nrows() == 0 {
            return Err(Error::DimensionMismatch("empty dictionary".into()));
        }
        for (name, m) in [("intensity", &phi_i), ("depth", &phi_d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} dictionary has non-finite entries"
                )));
            }
            if let Some(j) = (0..m.ncols()).find(|&j| m.column(j).norm() == 0.0) {
                return Err(Error::InvalidArgument(format!("{name} atom {j} has zero norm")));
            }
        }
        Ok(Self { phi_i, phi_d })
    }

    /// i.i.d. standard Gaussian entries, columns scaled to unit norm.
    pub fn gaussian(rows_i: usize, rows_d: usize, atoms: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, Purpose::Dictionary, 0);
        let phi_i = gaussian_dictionary(rows_i, atoms, &mut r);
        let phi_d = gaussian_dictionary(rows_d, atoms, &mut r);
        Self { phi_i, phi_d }
    }

    pub fn atoms(&self) -> usize {
        self.phi_i.ncols()
    }

    pub fn normalize_columns(&mut self) {
        normalize_columns(&mut self.phi_i);
        normalize_columns(&mut self.phi_d);
    }
}

pub fn gaussian_dictionary(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    normalize_columns(&mut m);
    m
}

/// Scales every nonzero column to unit Euclidean norm.
pub fn normalize_columns(m: &mut Matrix) {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPair {
    pub y_i: Vector,
    pub y_d: Vector,
    pub f0: f64,
}

/// Coefficients, coupling activities and magnitude bounds for one signal pair.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCode {
    pub a: Vector,
    pub b: Vector,
    pub x: Vector,
    pub u_i: f64,
    pub u_d: f64,
}

impl JointCode {
    pub fn zeros(atoms: usize, u_i: f64, u_d: f64) -> Self {
        Self {
            a: Vector::zeros(atoms),
            b: Vector::zeros(atoms),
            x: Vector::zeros(atoms),
            u_i,
            u_d,
        }
    }

    /// Box and coupling invariants at tolerance `tol`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        (0..self.x.len()).all(|i| {
            let x = self.x[i];
            x >= -tol
                && x <= 1.0 + tol
                && self.a[i].abs() <= self.u_i * x + tol
                && self.b[i].abs() <= self.u_d * x + tol
        })
    }

    pub fn objective(&self) -> f64 {
        self.x.sum()
    }
}

/// Planted ground truth of a synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub support: Vec<usize>,
    pub a0: Vector,
    pub b0: Vector,
    pub gamma: f64,
    pub noise_i: Vector,
    pub noise_d: Vector,
}

impl GroundTruth {
    /// Multiplies the coefficients (and noise) by per-modality factors, as
    /// happens when the signals are normalized.
    pub fn rescaled(&self, scale_i: f64, scale_d: f64) -> Self {
        let a0 = &self.a0 * scale_i;
        let b0 = &self.b0 * scale_d;
        let gamma = gamma_of(&a0, &b0, &self.support).unwrap_or(self.gamma);
        Self {
            support: self.support.clone(),
            a0,
            b0,
            gamma,
            noise_i: &self.noise_i * scale_i,
            noise_d: &self.noise_d * scale_d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RipMode {
    /// Coherence-based: delta = mu * (s - 1).
    Worst,
    /// Average-case: |mean pairwise inner product| * (s - 1). Not a rigorous
    /// RIP constant.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipEstimate {
    pub s: usize,
    pub delta: f64,
    pub mode: RipMode,
}

/// Rescales both signals to unit norm. Returns the normalized pair and the
/// factors that were divided out (`y = scale * y_normalized`).
pub fn normalize_pair(pair: &SignalPair) -> Result<(SignalPair, f64, f64)> {
    let si = pair.y_i.norm();
    let sd = pair.y_d.norm();
    if si == 0.0 {
        return Err(Error::ZeroSignal { modality: "intensity" });
    }
    if sd == 0.0 {
        return Err(Error::ZeroSignal { modality: "depth" });
    }
    let out = SignalPair {
        y_i: &pair.y_i / si,
        y_d: &pair.y_d / sd,
        f0: 1.0,
    };
    Ok((out, si, sd))
}

/// Draws a planted joint-sparse instance.
///
/// On each support index the larger-magnitude coefficient is uniform on
/// `[0.5, 1]` and the smaller one is that value times a ratio uniform on
/// `[1 - gamma_target, 1]`; which modality is larger and both signs are fair
/// coins. Noise is white Gaussian rescaled to hit `snr_db` exactly per
/// modality; pass `f64::INFINITY` for noiseless signals. The signals are not
/// normalized.
pub fn synthesize(
    dicts: &DictionaryPair,
    sparsity: usize,
    gamma_target: f64,
    snr_db: f64,
    seed: u64,
) -> Result<(SignalPair, GroundTruth)> {
    let n = dicts.atoms();
    if sparsity == 0 || sparsity > n {
        return Err(Error::BadSparsity { sparsity, atoms: n });
    }
    if !(0.0..1.0).contains(&gamma_target) {
        return Err(Error::InvalidArgument(format!(
            "gamma_target {gamma_target} not in [0, 1)"
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("snr_db is NaN".into()));
    }

    let mut srng = rng::stream(seed, Purpose::Support, 0);
    let mut support = index::sample(&mut srng, n, sparsity).into_vec();
    support.sort_unstable();

    let mut crng = rng::stream(seed, Purpose::Coefficients, 0);
    let mut a0 = Vector::zeros(n);
    let mut b0 = Vector::zeros(n);
    for &i in &support {
        let big = 0.5 + 0.5 * crng.random::<f64>();
        let ratio = 1.0 - gamma_target * crng.random::<f64>();
        let small = big * ratio;
        let (ma, mb) = if crng.random::<bool>() {
            (big, small)
        } else {
            (small, big)
        };
        let sa = if crng.random::<bool>() { 1.0 } else { -1.0 };
        let sb = if crng.random::<bool>() { 1.0 } else { -1.0 };
        a0[i] = sa * ma;
        b0[i] = sb * mb;
    }
    let gamma = gamma_of(&a0, &b0, &support)?;

    let clean_i = &dicts.phi_i * &a0;
    let clean_d = &dicts.phi_d * &b0;
    let mut nrng = rng::stream(seed, Purpose::Noise, 0);
    let noise_i = noise_at_snr(&clean_i, snr_db, &mut nrng);
    let noise_d = noise_at_snr(&clean_d, snr_db, &mut nrng);

    let pair = SignalPair {
        y_i: &clean_i + &noise_i,
        y_d: &clean_d + &noise_d,
        f0: f64::NAN,
    };
    let pair = SignalPair {
        f0: pair.y_i.norm().max(pair.y_d.norm()),
        ..pair
    };
    Ok((
        pair,
        GroundTruth {
            support,
            a0,
            b0,
            gamma,
            noise_i,
            noise_d,
        },
    ))
}

/// SNR is `10 log10(|signal|^2 / |noise|^2)`.
fn noise_at_snr(signal: &Vector, snr_db: f64, rng: &mut Rng) -> Vector {
    let len = signal.len();
    // Draw even for infinite SNR so the stream position does not depend on it.
    let g = Vector::from_fn(len, |_, _| StandardNormal.sample(rng));
    let s = signal.norm();
    if snr_db.is_infinite() && snr_db > 0.0 || s == 0.0 {
        return Vector::zeros(len);
    }
    let target = s / 10f64.powf(snr_db / 20.0);
    let gn = g.norm();
    if gn == 0.0 {
        return Vector::zeros(len);
    }
    g * (target / gn)
}

/// Largest absolute inner product between distinct unit-normalized columns.
pub fn coherence(m: &Matrix) -> Result<f64> {
    let gram = normalized_gram(m)?;
    let n = gram.ncols();
    let mut mu: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            mu = mu.max(gram[(i, j)].abs());
        }
    }
    Ok(mu.min(1.0))
}

fn normalized_gram(m: &Matrix) -> Result<Matrix> {
    if m.ncols() < 2 {
        return Err(Error::SingleColumn { cols: m.ncols() });
    }
    let mut u = m.clone();
    normalize_columns(&mut u);
    Ok(u.transpose() * &u)
}

/// Restricted-isometry estimate `delta_s` from pairwise column inner products.
pub fn delta_estimate(m: &Matrix, s: usize, mode: RipMode) -> Result<RipEstimate> {
    if s == 0 || s > m.ncols() {
        return Err(Error::InvalidArgument(format!("s = {s} outside 1..={}", m.ncols())));
    }
    if s == 1 {
        return Ok(RipEstimate { s, delta: 0.0, mode });
    }
    let base = match mode {
        RipMode::Worst => coherence(m)?,
        RipMode::Mean => {
            let gram = normalized_gram(m)?;
            let n = gram.ncols();
            let mut sum = 0.0;
            for j in 0..n {
                for i in 0..j {
                    sum += gram[(i, j)];
                }
            }
            (sum / (n * (n - 1) / 2) as f64).abs()
        }
    };
    Ok(RipEstimate {
        s,
        delta: base * (s - 1) as f64,
        mode,
    })
}

/// `1 - min_i min(|a_i|/|b_i|, |b_i|/|a_i|)` over the support. A coefficient
/// that vanishes in exactly one modality gives ratio 0.
pub fn gamma_of(a0: &Vector, b0: &Vector, support: &[usize]) -> Result<f64> {
    if a0.len() != b0.len() {
        return Err(Error::DimensionMismatch(format!(
            "a0 has {} entries, b0 {}",
            a0.len(),
            b0.len()
        )));
    }
    let mut min_ratio: f64 = 1.0;
    for &i in support {
        if i >= a0.len() {
            return Err(Error::DimensionMismatch(format!("support index {i} out of range")));
        }
        let (x, y) = (a0[i].abs(), b0[i].abs());
        if x == 0.0 && y == 0.0 {
            return Err(Error::ZeroOnSupport { index: i });
        }
        min_ratio = min_ratio.min(x.min(y) / x.max(y));
    }
    Ok(1.0 - min_ratio)
}

/// Block-diagonal `[phi_i 0; 0 phi_d]`.
pub fn block_dict(dicts: &DictionaryPair) -> Matrix {
    let (ni, nd, n) = (dicts.phi_i.nrows(), dicts.phi_d.nrows(), dicts.atoms());
    let mut a = Matrix::zeros(ni + nd, 2 * n);
    a.view_mut((0, 0), (ni, n)).copy_from(&dicts.phi_i);
    a.view_mut((ni, n), (nd, n)).copy_from(&dicts.phi_d);
    a
}
