//! Optimal one-to-one matching of learned atom pairs to reference atom pairs.

use pathfinding::prelude::{kuhn_munkres, Matrix as Weights};

use crate::error::{Error, Result};
use crate::model::{DictionaryPair, Matrix};

/// Indexed by reference atom: `assignment[t]` is the learned atom matched to
/// reference atom `t` and `mse[t]` the squared distance between the two
/// unit-norm stacked atoms after sign alignment.
///
/// Signs are aligned per modality: flipping the intensity or the depth half
/// of an atom pair alone is absorbed by the sign of that modality's
/// coefficient, so both halves are equally valid learned atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomMatch {
    pub assignment: Vec<usize>,
    pub mse: Vec<f64>,
    pub recovered: usize,
}

/// Stacked `[phi_i; phi_d]` atoms, each scaled to unit norm.
fn stacked(d: &DictionaryPair) -> Matrix {
    let mut s = Matrix::zeros(d.phi_i.nrows() + d.phi_d.nrows(), d.atoms());
    s.rows_mut(0, d.phi_i.nrows()).copy_from(&d.phi_i);
    s.rows_mut(d.phi_i.nrows(), d.phi_d.nrows()).copy_from(&d.phi_d);
    for mut c in s.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    s
}

/// Integer resolution of the similarity weights handed to the assignment solver.
const WEIGHT_SCALE: f64 = 1e12;

pub fn match_atoms(learned: &DictionaryPair, truth: &DictionaryPair, threshold: f64) -> Result<AtomMatch> {
    if learned.atoms() != truth.atoms() {
        return Err(Error::SizeMismatch {
            left: learned.atoms(),
            right: truth.atoms(),
        });
    }
    if learned.phi_i.nrows() != truth.phi_i.nrows() || learned.phi_d.nrows() != truth.phi_d.nrows() {
        return Err(Error::DimensionMismatch(
            "learned and reference atoms differ in length".into(),
        ));
    }
    let n = truth.atoms();
    let rows = truth.phi_i.nrows();
    let (l, t) = (stacked(learned), stacked(truth));
    // Partial inner products of the intensity and depth halves.
    let inner_i = t.rows(0, rows).tr_mul(&l.rows(0, rows));
    let inner_d = t.rows(rows, t.nrows() - rows).tr_mul(&l.rows(rows, l.nrows() - rows));
    let sim = |ti: usize, li: usize| inner_i[(ti, li)].abs() + inner_d[(ti, li)].abs();
    let weights = Weights::from_fn(n, n, |(ti, li)| (sim(ti, li) * WEIGHT_SCALE).round() as i64);
    let (_, assignment) = kuhn_munkres(&weights);
    let sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
    let mse: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(ti, &li)| {
            let (si, sd) = (sign(inner_i[(ti, li)]), sign(inner_d[(ti, li)]));
            let ei = (l.column(li).rows(0, rows) * si - t.column(ti).rows(0, rows)).norm_squared();
            let ed = (l.column(li).rows(rows, l.nrows() - rows) * sd - t.column(ti).rows(rows, t.nrows() - rows))
                .norm_squared();
            ei + ed
        })
        .collect();
    let recovered = mse.iter().filter(|&&e| e < threshold).count();
    Ok(AtomMatch {
        assignment,
        mse,
        recovered,
    })
}
