//! Coefficient recovery bound for joint basis pursuit and the cone
//! constraint that its proof rests on, both as checkable quantities.

use crate::error::{Error, Result};
use crate::model::Vector;

/// Inputs of the bound. `m` is the restricted-isometry order `M` and
/// `delta_m_t0` the constant at order `M + |T0|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub eta: f64,
    pub gamma: f64,
    pub t0: usize,
    pub m: usize,
    pub delta_m: f64,
    pub delta_m_t0: f64,
    pub f0: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(0.0..1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.t0 == 0 || self.m == 0 {
            return bad("|T0| and M must be positive");
        }
        if !(self.delta_m >= 0.0 && self.delta_m_t0 >= 0.0) {
            return bad("isometry constants must be non-negative");
        }
        if !(self.f0 > 0.0) {
            return bad("f0 must be positive");
        }
        Ok(())
    }

    pub fn denominator(&self) -> f64 {
        let (m, t0) = (self.m as f64, self.t0 as f64);
        (m * (1.0 - self.delta_m_t0)).sqrt() - (t0 * (1.0 + self.delta_m)).sqrt()
    }
}

/// `C = (4 eta sqrt(M) + gamma |T0| sqrt(1 + d_M)) / (sqrt(M (1 - d_{M+T0})) - sqrt(|T0| (1 + d_M)))`.
pub fn constant_c(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let den = inp.denominator();
    // NaN (d_{M+T0} > 1) is as vacuous as a non-positive value.
    if !(den > 0.0) {
        return Err(Error::DegenerateDenominator { denominator: den });
    }
    let (m, t0) = (inp.m as f64, inp.t0 as f64);
    Ok((4.0 * inp.eta * m.sqrt() + inp.gamma * t0 * (1.0 + inp.delta_m).sqrt()) / den)
}

/// Upper bound on `|[a0; b0] - [a*; b*]|^2`:
/// `((|T0| / M) (C + gamma sqrt|T0|)^2 + C^2) f0^2`.
pub fn recovery_bound(inp: &BoundInputs) -> Result<f64> {
    let c = constant_c(inp)?;
    let (m, t0) = (inp.m as f64, inp.t0 as f64);
    Ok((t0 / m * (c + inp.gamma * t0.sqrt()).powi(2) + c * c) * inp.f0 * inp.f0)
}

/// Stacked coefficient error `h` (length `2N`) and the planted support.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCheckInstance {
    h: Vector,
    support: Vec<usize>,
    gamma: f64,
    u: f64,
}

impl TheoryCheckInstance {
    pub fn new(h: Vector, support: Vec<usize>, gamma: f64, u: f64) -> Result<Self> {
        if h.len() % 2 != 0 {
            return Err(Error::DimensionMismatch(format!("h has odd length {}", h.len())));
        }
        let n = h.len() / 2;
        if let Some(&k) = support.iter().find(|&&k| k >= n) {
            return Err(Error::InvalidArgument(format!(
                "support index {k} out of range for N = {n}"
            )));
        }
        if !(u > 0.0) {
            return Err(Error::InvalidArgument(format!("U must be positive, got {u}")));
        }
        let mut support = support;
        support.sort_unstable();
        support.dedup();
        Ok(Self { h, support, gamma, u })
    }

    pub fn from_codes(
        a0: &Vector,
        b0: &Vector,
        a: &Vector,
        b: &Vector,
        support: Vec<usize>,
        gamma: f64,
        u: f64,
    ) -> Result<Self> {
        let n = a0.len();
        if b0.len() != n || a.len() != n || b.len() != n {
            return Err(Error::DimensionMismatch("coefficient vectors differ in length".into()));
        }
        let h = Vector::from_fn(2 * n, |k, _| if k < n { a0[k] - a[k] } else { b0[k - n] - b[k - n] });
        Self::new(h, support, gamma, u)
    }
}

/// `|h_{T0^c}|_1 - |h_{T0}|_1 - gamma U |T0|`, with `T0` taken in both halves
/// of `h`. Non-positive when the cone constraint holds.
pub fn cone_constraint_check(inst: &TheoryCheckInstance) -> f64 {
    let n = inst.h.len() / 2;
    let mut on = vec![false; n];
    for &k in &inst.support {
        on[k] = true;
    }
    let (mut inside, mut outside) = (0.0, 0.0);
    for (k, v) in inst.h.iter().enumerate() {
        if on[k % n] {
            inside += v.abs();
        } else {
            outside += v.abs();
        }
    }
    outside - inside - inst.gamma * inst.u * inst.support.len() as f64
}
