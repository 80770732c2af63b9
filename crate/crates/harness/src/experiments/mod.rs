//! The three reproducible experiments. Each returns a [`Table`] whose
//! metadata line records the configuration hash and master seed.

mod dict;
mod inpaint;
mod recovery;

pub use dict::run_dict_recovery;
pub use inpaint::{run_inpaint, training_patches, InpaintOutput};
pub use recovery::{calibrate_gl_lambda, run_recovery};

use jointsparse::jbp::{solve, JbpProblem, SolveStatus, SolverOptions};
use jointsparse::{DictionaryPair, Vector};

use crate::csv::Table;
use crate::error::{HarnessError, Result};

fn table(header: &[&str], hash: &str, seed: u64) -> Table {
    let mut t = Table::new(header);
    t.meta("config_hash", hash);
    t.meta("seed", seed);
    t
}

/// JBP with equal balls and unit magnitude bound on a normalized pair;
/// anything short of an optimal solve is reported against `seed`.
fn jbp_code(dicts: &DictionaryPair, yi: &Vector, yd: &Vector, eta: f64, seed: u64) -> Result<(Vector, Vector)> {
    let p = JbpProblem::new(yi, yd, &dicts.phi_i, &dicts.phi_d, eta, 1.0);
    let sol = solve(&p, &SolverOptions::default()).map_err(|source| HarnessError::Trial { seed, source })?;
    match sol.status {
        SolveStatus::Optimal => Ok((sol.code.a, sol.code.b)),
        SolveStatus::Infeasible => Err(HarnessError::Trial {
            seed,
            source: jointsparse::Error::Infeasible { slack: sol.gap },
        }),
        SolveStatus::MaxIter => Err(HarnessError::Unconverged { seed }),
    }
}

/// `sqrt(|r_i|^2 + |r_d|^2)`.
fn residual(dicts: &DictionaryPair, yi: &Vector, yd: &Vector, a: &Vector, b: &Vector) -> f64 {
    ((yi - &dicts.phi_i * a).norm_squared() + (yd - &dicts.phi_d * b).norm_squared()).sqrt()
}
