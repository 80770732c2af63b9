//! Independent reference solvers used only by tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};

type M = DMatrix<f64>;
type V = DVector<f64>;

/// Exact Euclidean projection of `c` onto `{a : |y - phi a| <= eps}` by
/// bisection on the multiplier of the KKT system `(I + l G) a = c + l phi^T y`.
pub struct BallProjector {
    vecs: M,
    vals: V,
    phity: V,
    phi: M,
    y: V,
    eps: f64,
}

impl BallProjector {
    pub fn new(phi: &M, y: &V, eps: f64) -> Self {
        let g = phi.transpose() * phi;
        let eig = SymmetricEigen::new(g);
        Self {
            vecs: eig.eigenvectors,
            vals: eig.eigenvalues,
            phity: phi.transpose() * y,
            phi: phi.clone(),
            y: y.clone(),
            eps,
        }
    }

    fn at(&self, c: &V, l: f64) -> V {
        let rhs = self.vecs.transpose() * (c + &self.phity * l);
        let scaled = V::from_fn(rhs.len(), |i, _| rhs[i] / (1.0 + l * self.vals[i].max(0.0)));
        &self.vecs * scaled
    }

    pub fn residual(&self, a: &V) -> f64 {
        (&self.y - &self.phi * a).norm()
    }

    pub fn project(&self, c: &V) -> V {
        if self.residual(c) <= self.eps {
            return c.clone();
        }
        let mut hi = 1.0;
        while self.residual(&self.at(c, hi)) > self.eps {
            hi *= 2.0;
            assert!(hi < 1e30, "ball is empty");
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.residual(&self.at(c, mid)) > self.eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.at(c, hi)
    }
}

/// prox of `tau * max(|v0|, |v1|)` via Moreau: `v - tau * P_{l1 ball}(v / tau)`.
fn prox_linf_pair(v0: f64, v1: f64, tau: f64) -> (f64, f64) {
    let (w0, w1) = (v0 / tau, v1 / tau);
    let (p0, p1) = if w0.abs() + w1.abs() <= 1.0 {
        (w0, w1)
    } else {
        let theta = (w0.abs() + w1.abs() - 1.0) / 2.0;
        let s0 = (w0.abs() - theta).max(0.0);
        let s1 = (w1.abs() - theta).max(0.0);
        if s0 > 0.0 && s1 > 0.0 {
            (w0.signum() * s0, w1.signum() * s1)
        } else if w0.abs() >= w1.abs() {
            (w0.signum(), 0.0)
        } else {
            (0.0, w1.signum())
        }
    };
    (v0 - tau * p0, v1 - tau * p1)
}

/// Primal-dual first-order solve of `min sum max(|a_k|, |b_k|)` over the two
/// residual balls (unit magnitude bounds, box assumed inactive). The final
/// iterate is projected onto the balls so the returned objective belongs to a
/// feasible point.
pub fn first_order_jbp(phi_i: &M, phi_d: &M, y_i: &V, y_d: &V, eps_i: f64, eps_d: f64, iters: usize) -> (f64, V, V) {
    let n = phi_i.ncols();
    let pi = BallProjector::new(phi_i, y_i, eps_i);
    let pd = BallProjector::new(phi_d, y_d, eps_d);
    let norm_i = phi_i.clone().svd(false, false).singular_values.max();
    let norm_d = phi_d.clone().svd(false, false).singular_values.max();
    let lip = norm_i.max(norm_d);
    let tau = 0.95 / lip;
    let sigma = 0.95 / lip;
    let (mut a, mut b) = (V::zeros(n), V::zeros(n));
    let (mut abar, mut bbar) = (a.clone(), b.clone());
    let mut qi = V::zeros(y_i.len());
    let mut qd = V::zeros(y_d.len());
    let ball_prox_conj = |q: V, y: &V, eps: f64| -> V {
        // prox of sigma g* where g is the indicator of {z : |y - z| <= eps}.
        let z = &q / sigma;
        let d = &z - y;
        let nd = d.norm();
        let proj = if nd <= eps { z.clone() } else { y + d * (eps / nd) };
        q - proj * sigma
    };
    for _ in 0..iters {
        qi = ball_prox_conj(&qi + (phi_i * &abar) * sigma, y_i, eps_i);
        qd = ball_prox_conj(&qd + (phi_d * &bbar) * sigma, y_d, eps_d);
        let va = &a - (phi_i.transpose() * &qi) * tau;
        let vb = &b - (phi_d.transpose() * &qd) * tau;
        let mut an = V::zeros(n);
        let mut bn = V::zeros(n);
        for k in 0..n {
            let (p0, p1) = prox_linf_pair(va[k], vb[k], tau);
            an[k] = p0;
            bn[k] = p1;
        }
        abar = &an * 2.0 - &a;
        bbar = &bn * 2.0 - &b;
        a = an;
        b = bn;
    }
    let a = pi.project(&a);
    let b = pd.project(&b);
    let obj = (0..n).map(|k| a[k].abs().max(b[k].abs())).sum();
    (obj, a, b)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Least-squares fit on `support`, shrunk toward zero as far as the ball
/// allows. `None` when the support cannot reach the ball.
fn support_point(phi: &M, y: &V, eps: f64, support: &[usize]) -> Option<V> {
    let n = phi.ncols();
    let sub = M::from_fn(phi.nrows(), support.len(), |r, c| phi[(r, support[c])]);
    let coef = sub.clone().svd(true, true).solve(y, 1e-12).ok()?;
    let fit = &sub * &coef;
    if (y - &fit).norm() > eps {
        return None;
    }
    // smallest theta with |y - theta fit| <= eps
    let (ff, yf, yy) = (fit.norm_squared(), y.dot(&fit), y.norm_squared());
    let c = yy - eps * eps;
    let theta = if c <= 0.0 {
        0.0
    } else {
        ((yf - (yf * yf - ff * c).max(0.0).sqrt()) / ff).clamp(0.0, 1.0)
    };
    let mut full = V::zeros(n);
    for (j, &s) in support.iter().enumerate() {
        full[s] = coef[j] * theta;
    }
    if (y - phi * &full).norm() > eps * (1.0 + 1e-12) {
        full = V::zeros(n);
        for (j, &s) in support.iter().enumerate() {
            full[s] = coef[j];
        }
    }
    Some(full)
}

/// Smallest `sum max(|a_k|/u, |b_k|/u)` over feasible points built from every
/// shared support of size at most `max_support`. Returns `None` when no
/// enumerated support is feasible.
pub fn enumeration_upper_bound(
    phi_i: &M,
    phi_d: &M,
    y_i: &V,
    y_d: &V,
    eps_i: f64,
    eps_d: f64,
    u: f64,
    max_support: usize,
) -> Option<f64> {
    let n = phi_i.ncols();
    let mut best: Option<f64> = None;
    for k in 0..=max_support {
        for s in combinations(n, k) {
            let a = if k == 0 {
                (y_i.norm() <= eps_i).then(|| V::zeros(n))
            } else {
                support_point(phi_i, y_i, eps_i, &s)
            };
            let b = if k == 0 {
                (y_d.norm() <= eps_d).then(|| V::zeros(n))
            } else {
                support_point(phi_d, y_d, eps_d, &s)
            };
            let (Some(a), Some(b)) = (a, b) else { continue };
            let x: Vec<f64> = (0..n).map(|j| a[j].abs().max(b[j].abs()) / u).collect();
            if x.iter().any(|&v| v > 1.0) {
                continue;
            }
            let obj: f64 = x.iter().sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}
