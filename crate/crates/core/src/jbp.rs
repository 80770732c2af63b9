//! Joint basis pursuit.
//!
//! Solves
//!
//! ```text
//! min  sum_i x_i
//! s.t. |y_i - Phi_i a|^2 <= eps_i^2,   |M (y_d - Phi_d b)|^2 <= eps_d^2,
//!      -u_i x <= a <= u_i x,            -u_d x <= b <= u_d x,     0 <= x <= 1
//! ```
//!
//! with a log-barrier interior-point method. Each coupling `|a_k| <= u x_k` is
//! split into two linear inequalities and the two residual balls get a
//! barrier on `eps^2 - |r|^2`. The per-atom `x_k` is eliminated from each
//! Newton system in closed form, leaving a dense `2N x 2N` SPD system in
//! `(a, b)` that is factored with Cholesky.

use nalgebra::{Cholesky, DMatrix, Dyn, SVD};

use crate::error::{Error, Result};
use crate::model::{JointCode, Matrix, Vector};

/// One joint basis pursuit instance. Dictionaries are borrowed so that many signals can be
/// coded against the same pair without copies.
#[derive(Debug, Clone)]
pub struct JbpProblem<'a> {
    pub y_i: &'a Vector,
    pub y_d: &'a Vector,
    pub phi_i: &'a Matrix,
    pub phi_d: &'a Matrix,
    pub eps_i: f64,
    pub eps_d: f64,
    pub u_i: f64,
    pub u_d: f64,
    /// Observed depth entries; `None` means every entry is observed.
    pub mask_d: Option<&'a [bool]>,
}

impl<'a> JbpProblem<'a> {
    pub fn new(y_i: &'a Vector, y_d: &'a Vector, phi_i: &'a Matrix, phi_d: &'a Matrix, eps: f64, u: f64) -> Self {
        Self {
            y_i,
            y_d,
            phi_i,
            phi_d,
            eps_i: eps,
            eps_d: eps,
            u_i: u,
            u_d: u,
            mask_d: None,
        }
    }

    pub fn with_mask(mut self, mask: &'a [bool]) -> Self {
        self.mask_d = Some(mask);
        self
    }

    pub fn atoms(&self) -> usize {
        self.phi_i.ncols()
    }

    /// Number of inequality constraints: six linear per atom plus two balls.
    pub fn constraint_count(&self) -> usize {
        6 * self.atoms() + 2
    }

    fn validate(&self) -> Result<()> {
        let n = self.phi_i.ncols();
        if self.phi_d.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "dictionaries have {} and {} atoms",
                n,
                self.phi_d.ncols()
            )));
        }
        if self.phi_i.nrows() != self.y_i.len() || self.phi_d.nrows() != self.y_d.len() {
            return Err(Error::DimensionMismatch(
                "signal length does not match dictionary rows".into(),
            ));
        }
        if let Some(m) = self.mask_d {
            if m.len() != self.y_d.len() {
                return Err(Error::DimensionMismatch(format!(
                    "depth mask has {} entries, signal {}",
                    m.len(),
                    self.y_d.len()
                )));
            }
        }
        for (name, v) in [
            ("eps_i", self.eps_i),
            ("eps_d", self.eps_d),
            ("u_i", self.u_i),
            ("u_d", self.u_d),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Depth dictionary and signal restricted to observed rows.
    fn observed_depth(&self) -> (Matrix, Vector) {
        match self.mask_d {
            None => (self.phi_d.clone(), self.y_d.clone()),
            Some(mask) => {
                let rows: Vec<usize> = (0..mask.len()).filter(|&r| mask[r]).collect();
                let phi = Matrix::from_fn(rows.len(), self.phi_d.ncols(), |r, c| self.phi_d[(rows[r], c)]);
                let y = Vector::from_iterator(rows.len(), rows.iter().map(|&r| self.y_d[r]));
                (phi, y)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Barrier parameter growth factor.
    pub barrier_mu: f64,
    pub initial_t: f64,
    /// Stop when `m / t` falls below this.
    pub gap_tol: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
    pub feas_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            barrier_mu: 10.0,
            initial_t: 1.0,
            gap_tol: 1e-8,
            newton_tol: 1e-9,
            max_newton: 50,
            max_outer: 60,
            feas_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JbpSolution {
    pub code: JointCode,
    pub objective: f64,
    /// Barrier duality-gap bound `m / t` at termination (or the phase-I slack
    /// when infeasible).
    pub gap: f64,
    pub newton_steps: usize,
    pub status: SolveStatus,
}

/// `x_k = max(|a_k| / u_i, |b_k| / u_d)`.
pub fn tighten_activity(a: &Vector, b: &Vector, u_i: f64, u_d: f64) -> Vector {
    a.zip_map(b, |ak, bk| (ak.abs() / u_i).max(bk.abs() / u_d))
}

/// Worst violation of each constraint family. Violations are signed: a
/// negative value is the smallest remaining slack, so a negative `tol` checks
/// strict feasibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub residual_i: f64,
    pub residual_d: f64,
    pub box_violation: f64,
    pub coupling_violation: f64,
    pub feasible: bool,
}

pub fn check_feasibility(p: &JbpProblem<'_>, code: &JointCode, tol: f64) -> FeasibilityReport {
    let residual_i = (p.y_i - p.phi_i * &code.a).norm();
    let rd = p.y_d - p.phi_d * &code.b;
    let residual_d = match p.mask_d {
        None => rd.norm(),
        Some(m) => rd
            .iter()
            .zip(m)
            .filter(|(_, &o)| o)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt(),
    };
    let mut box_violation = f64::NEG_INFINITY;
    let mut coupling_violation = f64::NEG_INFINITY;
    for k in 0..code.x.len() {
        let x = code.x[k];
        box_violation = box_violation.max(-x).max(x - 1.0);
        coupling_violation = coupling_violation
            .max(code.a[k].abs() - p.u_i * x)
            .max(code.b[k].abs() - p.u_d * x);
    }
    let feasible =
        residual_i <= p.eps_i + tol && residual_d <= p.eps_d + tol && box_violation <= tol && coupling_violation <= tol;
    FeasibilityReport {
        residual_i,
        residual_d,
        box_violation,
        coupling_violation,
        feasible,
    }
}

/// Least-squares point of one residual ball, pulled toward zero while keeping
/// the residual halfway between its minimum and `eps`.
struct BallStart {
    coef: Vector,
}

fn ball_start(phi: &Matrix, y: &Vector, eps: f64) -> std::result::Result<BallStart, f64> {
    let n = phi.ncols();
    let y_norm = y.norm();
    if phi.nrows() == 0 || y_norm < eps {
        return Ok(BallStart { coef: Vector::zeros(n) });
    }
    // Ridge least squares with a vanishing ridge.
    let svd = SVD::new(phi.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let ridge = 1e-12 * smax * smax;
    let uty = u.transpose() * y;
    let scaled = Vector::from_fn(uty.len(), |i, _| {
        let s = svd.singular_values[i];
        s * uty[i] / (s * s + ridge)
    });
    let coef = vt.transpose() * scaled;
    let v = phi * &coef;
    let min_residual = (y - &v).norm();
    if min_residual >= eps {
        return Err(min_residual - eps);
    }
    let target = eps - 0.5 * (eps - min_residual);
    // Smallest theta in [0, 1] with |y - theta v| = target.
    let vv = v.norm_squared();
    let yv = y.dot(&v);
    let c = y_norm * y_norm - target * target;
    let disc = (yv * yv - vv * c).max(0.0);
    let theta = if vv > 0.0 {
        ((yv - disc.sqrt()) / vv).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(BallStart { coef: coef * theta })
}

const X_FLOOR: f64 = 1e-2;

/// Finds a point strictly inside every constraint, or reports the
/// minimal slack by which the residual balls (or the `x <= 1` box) cannot be
/// met.
pub fn phase1_start(p: &JbpProblem<'_>) -> Result<JointCode> {
    p.validate()?;
    let (phi_d, y_d) = p.observed_depth();
    let a = ball_start(p.phi_i, p.y_i, p.eps_i).map_err(|slack| Error::Infeasible { slack })?;
    let b = ball_start(&phi_d, &y_d, p.eps_d).map_err(|slack| Error::Infeasible { slack })?;
    let (mut a, mut b) = (a.coef, b.coef);
    let mut tight = tighten_activity(&a, &b, p.u_i, p.u_d);
    if tight.max() >= 1.0 {
        // The shrunken least-squares point exceeds the magnitude bounds; look
        // for the point of the balls with the smallest scaled max-magnitude.
        let balls = [
            Ball::new(p.phi_i.clone(), p.y_i.clone(), p.eps_i),
            Ball::new(phi_d.clone(), y_d.clone(), p.eps_d),
        ];
        let (a2, b2) = linf_phase1(&balls, p.u_i, p.u_d, a, b).map_err(|slack| Error::Infeasible { slack })?;
        a = a2;
        b = b2;
        tight = tighten_activity(&a, &b, p.u_i, p.u_d);
    }
    let mut x = Vector::zeros(tight.len());
    for k in 0..tight.len() {
        let t = tight[k];
        if t >= 1.0 {
            return Err(Error::Infeasible { slack: t - 1.0 });
        }
        let inflated = 1.01 * t + X_FLOOR;
        x[k] = if inflated < 1.0 { inflated } else { 0.5 * (t + 1.0) };
    }
    Ok(JointCode {
        a,
        b,
        x,
        u_i: p.u_i,
        u_d: p.u_d,
    })
}

/// Barrier minimization of `s` subject to `|a_k| <= u_i s`, `|b_k| <= u_d s`
/// and both residual balls, started from a point strictly inside the balls.
/// Returns as soon as `s` drops below one; otherwise reports `s* - 1`.
fn linf_phase1(
    balls: &[Ball; 2],
    u_i: f64,
    u_d: f64,
    mut a: Vector,
    mut b: Vector,
) -> std::result::Result<(Vector, Vector), f64> {
    let n = a.len();
    let mut s = 1.01 * tighten_activity(&a, &b, u_i, u_d).max() + X_FLOOR;
    let m = (4 * n + 2) as f64;
    let value = |t: f64, s: f64, a: &Vector, b: &Vector| -> Option<f64> {
        let mut acc = t * s;
        for k in 0..n {
            let sl = [u_i * s - a[k], u_i * s + a[k], u_d * s - b[k], u_d * s + b[k]];
            if sl.iter().any(|&v| v <= 0.0) {
                return None;
            }
            acc -= sl.iter().map(|v| v.ln()).sum::<f64>();
        }
        for (ball, c) in [(&balls[0], a), (&balls[1], b)] {
            let g = ball.eps2 - ball.residual(c).norm_squared();
            if g <= 0.0 {
                return None;
            }
            acc -= g.ln();
        }
        Some(acc)
    };
    let mut t = 1.0;
    for _ in 0..60 {
        for _ in 0..50 {
            if s < 1.0 - 1e-3 {
                return Ok((a, b));
            }
            let dim = 2 * n + 1;
            let mut h = DMatrix::<f64>::zeros(dim, dim);
            let mut g = Vector::zeros(dim);
            g[0] = t;
            for (blk, ball, c, u) in [(0usize, &balls[0], &a, u_i), (1, &balls[1], &b, u_d)] {
                let off = 1 + blk * n;
                let r = ball.residual(c);
                let gb = ball.eps2 - r.norm_squared();
                let w = ball.phi.transpose() * &r;
                {
                    let mut v = h.view_mut((off, off), (n, n));
                    v.copy_from(&ball.gram);
                    v *= 2.0 / gb;
                    v.ger(4.0 / (gb * gb), &w, &w, 1.0);
                }
                for k in 0..n {
                    let (ip, im) = (1.0 / (u * s - c[k]), 1.0 / (u * s + c[k]));
                    g[0] -= u * (ip + im);
                    g[off + k] = ip - im - 2.0 * w[k] / gb;
                    h[(0, 0)] += u * u * (ip * ip + im * im);
                    let cross = u * (im * im - ip * ip);
                    h[(0, off + k)] = cross;
                    h[(off + k, 0)] = cross;
                    h[(off + k, off + k)] += ip * ip + im * im;
                }
            }
            let Some(ch) = Cholesky::<f64, Dyn>::new(h) else { break };
            let d = ch.solve(&(-&g));
            let dec = -g.dot(&d);
            if dec / 2.0 <= 1e-10 {
                break;
            }
            let (ds, da, db) = (d[0], d.rows(1, n).into_owned(), d.rows(1 + n, n).into_owned());
            let f0 = value(t, s, &a, &b).ok_or(f64::NAN)?;
            let mut step = 1.0;
            loop {
                if step < 1e-16 {
                    break;
                }
                let (sn, an, bn) = (s + step * ds, &a + &da * step, &b + &db * step);
                match value(t, sn, &an, &bn) {
                    Some(f) if f <= f0 - ALPHA * step * dec => {
                        s = sn;
                        a = an;
                        b = bn;
                        break;
                    }
                    _ => step *= BETA,
                }
            }
        }
        if s < 1.0 - 1e-3 {
            return Ok((a, b));
        }
        if m / t < 1e-9 {
            break;
        }
        t *= 10.0;
    }
    Err((s - 1.0).max(0.0))
}

/// One residual ball `eps^2 - |y - Phi c|^2 > 0`.
struct Ball {
    phi: Matrix,
    y: Vector,
    gram: Matrix,
    eps2: f64,
}

impl Ball {
    fn new(phi: Matrix, y: Vector, eps: f64) -> Self {
        let gram = phi.transpose() * &phi;
        Self {
            phi,
            y,
            gram,
            eps2: eps * eps,
        }
    }

    fn residual(&self, c: &Vector) -> Vector {
        &self.y - &self.phi * c
    }
}

struct Barrier<'p> {
    ball_i: Ball,
    ball_d: Ball,
    u_i: f64,
    u_d: f64,
    n: usize,
    _p: std::marker::PhantomData<&'p ()>,
}

/// Slacks of the six linear inequalities of one atom.
#[derive(Clone, Copy)]
struct AtomSlacks {
    lo: f64,
    hi: f64,
    ap: f64,
    am: f64,
    bp: f64,
    bm: f64,
}

impl AtomSlacks {
    fn new(x: f64, a: f64, b: f64, u_i: f64, u_d: f64) -> Self {
        Self {
            lo: x,
            hi: 1.0 - x,
            ap: u_i * x - a,
            am: u_i * x + a,
            bp: u_d * x - b,
            bm: u_d * x + b,
        }
    }

    fn all_positive(&self) -> bool {
        self.lo > 0.0 && self.hi > 0.0 && self.ap > 0.0 && self.am > 0.0 && self.bp > 0.0 && self.bm > 0.0
    }

    fn log_sum(&self) -> f64 {
        self.lo.ln() + self.hi.ln() + self.ap.ln() + self.am.ln() + self.bp.ln() + self.bm.ln()
    }
}

impl<'p> Barrier<'p> {
    fn slacks(&self, x: &Vector, a: &Vector, b: &Vector, k: usize) -> AtomSlacks {
        AtomSlacks::new(x[k], a[k], b[k], self.u_i, self.u_d)
    }

    /// Barrier objective `t sum x - sum log(slack)`; `None` outside the domain.
    fn value(&self, t: f64, x: &Vector, a: &Vector, b: &Vector) -> Option<f64> {
        let mut logs = 0.0;
        for k in 0..self.n {
            let s = self.slacks(x, a, b, k);
            if !s.all_positive() {
                return None;
            }
            logs += s.log_sum();
        }
        let gi = self.ball_i.eps2 - self.ball_i.residual(a).norm_squared();
        let gd = self.ball_d.eps2 - self.ball_d.residual(b).norm_squared();
        if gi <= 0.0 || gd <= 0.0 {
            return None;
        }
        Some(t * x.sum() - logs - gi.ln() - gd.ln())
    }

    /// Largest step in `(0, 1]` along `(dx, da, db)` that stays strictly inside.
    fn max_step(&self, x: &Vector, a: &Vector, b: &Vector, dx: &Vector, da: &Vector, db: &Vector) -> f64 {
        let mut smax: f64 = f64::INFINITY;
        let mut limit = |slack: f64, rate: f64| {
            if rate < 0.0 {
                smax = smax.min(-slack / rate);
            }
        };
        for k in 0..self.n {
            let s = self.slacks(x, a, b, k);
            limit(s.lo, dx[k]);
            limit(s.hi, -dx[k]);
            limit(s.ap, self.u_i * dx[k] - da[k]);
            limit(s.am, self.u_i * dx[k] + da[k]);
            limit(s.bp, self.u_d * dx[k] - db[k]);
            limit(s.bm, self.u_d * dx[k] + db[k]);
        }
        for (ball, c, dc) in [(&self.ball_i, a, da), (&self.ball_d, b, db)] {
            let r = ball.residual(c);
            let v = &ball.phi * dc;
            let vv = v.norm_squared();
            if vv > 0.0 {
                let g0 = ball.eps2 - r.norm_squared();
                let rv = r.dot(&v);
                let root = (rv + (rv * rv + vv * g0).max(0.0).sqrt()) / vv;
                smax = smax.min(root);
            }
        }
        smax
    }

    /// Newton direction for the barrier at `t`. Returns `(dx, da, db, decrement^2)`.
    fn newton_direction(&self, t: f64, x: &Vector, a: &Vector, b: &Vector) -> Option<(Vector, Vector, Vector, f64)> {
        let n = self.n;
        let (ui, ud) = (self.u_i, self.u_d);

        let ri = self.ball_i.residual(a);
        let rd = self.ball_d.residual(b);
        let gi = self.ball_i.eps2 - ri.norm_squared();
        let gd = self.ball_d.eps2 - rd.norm_squared();
        // Gradient of -log(eps^2 - |r|^2) is -2 Phi^T r / g.
        let wi = self.ball_i.phi.transpose() * &ri;
        let wd = self.ball_d.phi.transpose() * &rd;

        let mut gx = Vector::zeros(n);
        let mut ga = Vector::zeros(n);
        let mut gb = Vector::zeros(n);
        let mut hxx = Vector::zeros(n);
        let mut hxa = Vector::zeros(n);
        let mut hxb = Vector::zeros(n);
        let mut k_aa = Vector::zeros(n);
        let mut k_bb = Vector::zeros(n);
        let mut k_ab = Vector::zeros(n);

        for k in 0..n {
            let s = self.slacks(x, a, b, k);
            let (il, ih) = (1.0 / s.lo, 1.0 / s.hi);
            let (iap, iam, ibp, ibm) = (1.0 / s.ap, 1.0 / s.am, 1.0 / s.bp, 1.0 / s.bm);
            gx[k] = t - il + ih - ui * (iap + iam) - ud * (ibp + ibm);
            ga[k] = iap - iam - 2.0 * wi[k] / gi;
            gb[k] = ibp - ibm - 2.0 * wd[k] / gd;

            let box2 = il * il + ih * ih;
            let (a1, a2) = (iap * iap, iam * iam);
            let (b1, b2) = (ibp * ibp, ibm * ibm);
            let h = box2 + ui * ui * (a1 + a2) + ud * ud * (b1 + b2);
            hxx[k] = h;
            hxa[k] = ui * (a2 - a1);
            hxb[k] = ud * (b2 - b1);
            // Schur complements of the x_k pivot, written without cancellation.
            k_aa[k] = ((a1 + a2) * (box2 + ud * ud * (b1 + b2)) + 4.0 * ui * ui * a1 * a2) / h;
            k_bb[k] = ((b1 + b2) * (box2 + ui * ui * (a1 + a2)) + 4.0 * ud * ud * b1 * b2) / h;
            k_ab[k] = -hxa[k] * hxb[k] / h;
        }

        let build = |shift: f64| {
            let mut kmat = DMatrix::<f64>::zeros(2 * n, 2 * n);
            {
                let mut blk = kmat.view_mut((0, 0), (n, n));
                blk.copy_from(&self.ball_i.gram);
                blk *= 2.0 / gi;
                blk.ger(4.0 / (gi * gi), &wi, &wi, 1.0);
            }
            {
                let mut blk = kmat.view_mut((n, n), (n, n));
                blk.copy_from(&self.ball_d.gram);
                blk *= 2.0 / gd;
                blk.ger(4.0 / (gd * gd), &wd, &wd, 1.0);
            }
            for c in 0..n {
                kmat[(c, c)] += k_aa[c] + shift;
                kmat[(n + c, n + c)] += k_bb[c] + shift;
                kmat[(c, n + c)] = k_ab[c];
                kmat[(n + c, c)] = k_ab[c];
            }
            kmat
        };
        let mut rhs = Vector::zeros(2 * n);
        for k in 0..n {
            rhs[k] = -ga[k] + hxa[k] * gx[k] / hxx[k];
            rhs[n + k] = -gb[k] + hxb[k] * gx[k] / hxx[k];
        }

        let sol = solve_spd(build, &rhs)?;
        let da = sol.rows(0, n).into_owned();
        let db = sol.rows(n, n).into_owned();
        let dx = Vector::from_fn(n, |k, _| (-gx[k] - hxa[k] * da[k] - hxb[k] * db[k]) / hxx[k]);
        let decrement = -(gx.dot(&dx) + ga.dot(&da) + gb.dot(&db));
        if !decrement.is_finite() {
            return None;
        }
        Some((dx, da, db, decrement))
    }
}

fn solve_spd(build: impl Fn(f64) -> DMatrix<f64>, rhs: &Vector) -> Option<Vector> {
    let m = build(0.0);
    let scale = m.diagonal().amax().max(1.0);
    if let Some(ch) = Cholesky::<f64, Dyn>::new(m) {
        return Some(ch.solve(rhs));
    }
    // Numerically indefinite: retry with a growing diagonal shift.
    let mut shift = 1e-14 * scale;
    for _ in 0..8 {
        if let Some(ch) = Cholesky::<f64, Dyn>::new(build(shift)) {
            return Some(ch.solve(rhs));
        }
        shift *= 100.0;
    }
    None
}

const ALPHA: f64 = 0.01;
const BETA: f64 = 0.5;

/// Solves the joint basis pursuit problem. Dimension errors are returned as `Err`; infeasibility and
/// exhausted budgets are reported through [`SolveStatus`].
pub fn solve(p: &JbpProblem<'_>, opts: &SolverOptions) -> Result<JbpSolution> {
    p.validate()?;
    for (name, v) in [
        ("barrier_mu", opts.barrier_mu),
        ("initial_t", opts.initial_t),
        ("gap_tol", opts.gap_tol),
        ("newton_tol", opts.newton_tol),
        ("feas_tol", opts.feas_tol),
    ] {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
    }
    if opts.barrier_mu <= 1.0 {
        return Err(Error::InvalidArgument("barrier_mu must exceed 1".into()));
    }

    let start = match phase1_start(p) {
        Ok(code) => code,
        Err(Error::Infeasible { slack }) => {
            let n = p.atoms();
            return Ok(JbpSolution {
                code: JointCode::zeros(n, p.u_i, p.u_d),
                objective: f64::NAN,
                gap: slack,
                newton_steps: 0,
                status: SolveStatus::Infeasible,
            });
        }
        Err(e) => return Err(e),
    };

    let (phi_d, y_d) = p.observed_depth();
    let barrier = Barrier {
        ball_i: Ball::new(p.phi_i.clone(), p.y_i.clone(), p.eps_i),
        ball_d: Ball::new(phi_d, y_d, p.eps_d),
        u_i: p.u_i,
        u_d: p.u_d,
        n: p.atoms(),
        _p: std::marker::PhantomData,
    };

    let m = p.constraint_count() as f64;
    let JointCode {
        mut x, mut a, mut b, ..
    } = start;
    let mut t = opts.initial_t;
    let mut steps = 0usize;
    let mut status = SolveStatus::MaxIter;

    'outer: for _ in 0..opts.max_outer {
        for _ in 0..opts.max_newton {
            let Some((dx, da, db, dec)) = barrier.newton_direction(t, &x, &a, &b) else {
                break 'outer;
            };
            if dec / 2.0 <= opts.newton_tol {
                break;
            }
            let Some(f0) = barrier.value(t, &x, &a, &b) else {
                break 'outer;
            };
            let mut s = (0.99 * barrier.max_step(&x, &a, &b, &dx, &da, &db)).min(1.0);
            let accepted = loop {
                if s < 1e-16 {
                    break false;
                }
                let (xn, an, bn) = (&x + &dx * s, &a + &da * s, &b + &db * s);
                match barrier.value(t, &xn, &an, &bn) {
                    Some(f) if f <= f0 - ALPHA * s * dec => {
                        x = xn;
                        a = an;
                        b = bn;
                        break true;
                    }
                    _ => s *= BETA,
                }
            };
            steps += 1;
            if !accepted {
                // Progress is below rounding; treat the point as centered.
                break;
            }
        }
        if m / t <= opts.gap_tol {
            status = SolveStatus::Optimal;
            break;
        }
        t *= opts.barrier_mu;
    }

    let code = JointCode {
        a,
        b,
        x,
        u_i: p.u_i,
        u_d: p.u_d,
    };
    if status == SolveStatus::Optimal && !check_feasibility(p, &code, opts.feas_tol).feasible {
        status = SolveStatus::MaxIter;
    }
    Ok(JbpSolution {
        objective: code.objective(),
        code,
        gap: m / t,
        newton_steps: steps,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize_pair, synthesize, DictionaryPair};
    use crate::rng::{self, Purpose};
    use rand_distr::{Distribution, StandardNormal};

    fn planted(n: usize, atoms: usize, k: usize, snr: f64, seed: u64) -> (DictionaryPair, Vector, Vector) {
        let d = DictionaryPair::gaussian(n, n, atoms, seed);
        let (pair, _) = synthesize(&d, k, 0.25, snr, seed + 1).unwrap();
        let (pair, _, _) = normalize_pair(&pair).unwrap();
        (d, pair.y_i, pair.y_d)
    }

    #[test]
    fn zero_signals_give_zero_code() {
        let phi = Matrix::identity(4, 6);
        let y = Vector::zeros(4);
        let p = JbpProblem::new(&y, &y, &phi, &phi, 0.1, 1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.objective.abs() < 1e-6);
        assert!(sol.code.a.amax() < 1e-6 && sol.code.b.amax() < 1e-6 && sol.code.x.amax() < 1e-6);
    }

    #[test]
    fn tighten_activity_examples() {
        let a = Vector::from_vec(vec![1.0, 0.0]);
        let b = Vector::from_vec(vec![0.0, 2.0]);
        assert_eq!(tighten_activity(&a, &b, 2.0, 2.0).as_slice(), &[0.5, 1.0]);
        let z = Vector::zeros(3);
        assert_eq!(tighten_activity(&z, &z, 1.0, 3.0), z);
    }

    #[test]
    fn feasibility_report_examples() {
        let phi = Matrix::identity(3, 3);
        let y = Vector::zeros(3);
        let p = JbpProblem::new(&y, &y, &phi, &phi, 0.1, 1.0);
        let zero = JointCode::zeros(3, 1.0, 1.0);
        let r = check_feasibility(&p, &zero, 1e-9);
        assert!(r.feasible);
        assert_eq!(
            (r.residual_i, r.residual_d, r.box_violation, r.coupling_violation),
            (0.0, 0.0, 0.0, 0.0)
        );

        let mut bad = zero.clone();
        bad.a[0] = 0.7;
        bad.x[0] = 0.5;
        bad.x[1] = 0.1;
        bad.x[2] = 0.1;
        let p = JbpProblem::new(&y, &y, &phi, &phi, 1.0, 1.0);
        let r = check_feasibility(&p, &bad, 1e-9);
        assert!((r.coupling_violation - 0.2).abs() < 1e-12);
        assert!(!r.feasible);
    }

    #[test]
    fn solver_output_is_feasible_and_tight() {
        for seed in 0..5 {
            let (d, yi, yd) = planted(16, 32, 3, 20.0, seed);
            let p = JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, 0.1, 1.0);
            let opts = SolverOptions::default();
            let sol = solve(&p, &opts).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!(sol.gap <= opts.gap_tol * (1.0 + sol.objective.abs()));
            assert!(check_feasibility(&p, &sol.code, opts.feas_tol).feasible);
            assert!(sol.code.is_consistent(opts.feas_tol));
            let x = tighten_activity(&sol.code.a, &sol.code.b, 1.0, 1.0);
            assert!((x - &sol.code.x).amax() <= 1e-6);
        }
    }

    #[test]
    fn phase1_zero_point_when_balls_contain_origin() {
        let (d, yi, yd) = planted(6, 8, 2, 30.0, 3);
        let p = JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, 1.5, 1.0);
        let start = phase1_start(&p).unwrap();
        assert_eq!(start.a.amax(), 0.0);
        assert_eq!(start.b.amax(), 0.0);
        assert!(check_feasibility(&p, &start, -1e-9).feasible);
    }

    #[test]
    fn phase1_detects_infeasible_balls() {
        // Overdetermined: 10 rows, 4 atoms, generic signal.
        let mut r = rng::stream(5, Purpose::Perturb, 0);
        let phi = Matrix::from_fn(10, 4, |_, _| StandardNormal.sample(&mut r));
        let y = Vector::from_fn(10, |_, _| StandardNormal.sample(&mut r));
        // Least-squares oracle for the smallest achievable residual.
        let normal = phi.transpose() * &phi;
        let coef = normal.cholesky().unwrap().solve(&(phi.transpose() * &y));
        let min_res = (&y - &phi * coef).norm();
        assert!(min_res > 0.1);
        let p = JbpProblem::new(&y, &y, &phi, &phi, 0.5 * min_res, 100.0);
        match phase1_start(&p) {
            Err(Error::Infeasible { slack }) => assert!((slack - 0.5 * min_res).abs() < 1e-8),
            other => panic!("expected infeasible, got {other:?}"),
        }
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);

        let p = JbpProblem::new(&y, &y, &phi, &phi, 1.01 * min_res, 100.0);
        assert!(phase1_start(&p).is_ok());
    }

    #[test]
    fn phase1_is_strictly_feasible_on_planted_instances() {
        for seed in 0..10 {
            let (d, yi, yd) = planted(16, 32, 4, 25.0, seed);
            let p = JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, 0.1, 1.0);
            let start = phase1_start(&p).unwrap();
            assert!(check_feasibility(&p, &start, -1e-9).feasible, "seed {seed}");
        }
    }

    #[test]
    fn scaling_equivariance() {
        let (d, yi, yd) = planted(12, 24, 3, 20.0, 7);
        let opts = SolverOptions::default();
        let base = solve(&JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, 0.1, 1.0), &opts).unwrap();
        for s in [0.25, 3.0] {
            let (syi, syd) = (&yi * s, &yd * s);
            let scaled = solve(&JbpProblem::new(&syi, &syd, &d.phi_i, &d.phi_d, 0.1 * s, s), &opts).unwrap();
            assert_eq!(scaled.status, SolveStatus::Optimal);
            assert!((&scaled.code.a / s - &base.code.a).amax() < 1e-6);
            assert!((&scaled.code.b / s - &base.code.b).amax() < 1e-6);
            assert!((&scaled.code.x - &base.code.x).amax() < 1e-6);
            assert!((scaled.objective - base.objective).abs() < 1e-6);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let (d, yi, yd) = planted(12, 24, 3, 20.0, 9);
        let opts = SolverOptions::default();
        let base = solve(&JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, 0.1, 1.0), &opts).unwrap();
        let perm: Vec<usize> = (0..24).map(|k| (7 * k + 3) % 24).collect();
        let pi = Matrix::from_fn(12, 24, |r, c| d.phi_i[(r, perm[c])]);
        let pd = Matrix::from_fn(12, 24, |r, c| d.phi_d[(r, perm[c])]);
        let sol = solve(&JbpProblem::new(&yi, &yd, &pi, &pd, 0.1, 1.0), &opts).unwrap();
        for c in 0..24 {
            assert!((sol.code.a[c] - base.code.a[perm[c]]).abs() < 1e-6);
            assert!((sol.code.b[c] - base.code.b[perm[c]]).abs() < 1e-6);
            assert!((sol.code.x[c] - base.code.x[perm[c]]).abs() < 1e-6);
        }
    }

    #[test]
    fn larger_balls_never_raise_the_objective() {
        let opts = SolverOptions::default();
        for seed in 0..4 {
            let (d, yi, yd) = planted(10, 20, 3, 15.0, 20 + seed);
            let mut last = f64::INFINITY;
            for eps in [0.05, 0.1, 0.2, 0.4] {
                let sol = solve(&JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, eps, 1.0), &opts).unwrap();
                assert_eq!(sol.status, SolveStatus::Optimal);
                assert!(sol.objective <= last + 1e-6);
                last = sol.objective;
            }
        }
    }

    #[test]
    fn masked_depth_only_constrains_observed_rows() {
        let (d, yi, yd) = planted(12, 24, 3, 30.0, 4);
        let mask: Vec<bool> = (0..12).map(|r| r % 3 == 0).collect();
        let mut yd_corrupt = yd.clone();
        for r in 0..12 {
            if !mask[r] {
                yd_corrupt[r] = 50.0;
            }
        }
        let opts = SolverOptions::default();
        let clean = solve(
            &JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, 0.1, 1.0).with_mask(&mask),
            &opts,
        )
        .unwrap();
        let corrupt = solve(
            &JbpProblem::new(&yi, &yd_corrupt, &d.phi_i, &d.phi_d, 0.1, 1.0).with_mask(&mask),
            &opts,
        )
        .unwrap();
        assert_eq!(clean.status, SolveStatus::Optimal);
        assert!((clean.objective - corrupt.objective).abs() < 1e-7);

        let none = vec![false; 12];
        let p = JbpProblem::new(&yi, &yd, &d.phi_i, &d.phi_d, 0.1, 1.0).with_mask(&none);
        let sol = solve(&p, &opts).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.code.b.amax() < 1e-6);
    }

    #[test]
    fn dimension_errors() {
        let phi = Matrix::identity(3, 4);
        let y3 = Vector::zeros(3);
        let y2 = Vector::zeros(2);
        assert!(solve(
            &JbpProblem::new(&y2, &y3, &phi, &phi, 0.1, 1.0),
            &SolverOptions::default()
        )
        .is_err());
        let mask = [true; 2];
        let p = JbpProblem::new(&y3, &y3, &phi, &phi, 0.1, 1.0).with_mask(&mask);
        assert!(solve(&p, &SolverOptions::default()).is_err());
        assert!(solve(
            &JbpProblem::new(&y3, &y3, &phi, &phi, 0.0, 1.0),
            &SolverOptions::default()
        )
        .is_err());
    }
}
