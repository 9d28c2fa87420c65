//! Sequential minimal optimization for the box-constrained dual
//!
//! ```text
//! min 0.5 a'Qa + p'a   s.t.  y'a = 0,  0 <= a_t <= C
//! ```
//!
//! with `Q_st = y_s y_t K(s mod n, t mod n)`. Working pairs are chosen by
//! maximal violation with second-order gain.

use crate::error::{Error, Result};

/// Row-major `n x n` kernel matrix.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    pub fn new(n: usize, k: Vec<f64>) -> Self {
        assert_eq!(k.len(), n * n);
        Gram { n, k }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Gram { n, k }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.k[i * self.n..(i + 1) * self.n]
    }
}

#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub gram: &'a Gram,
    /// Signs, one per variable (length `n` or `2n`).
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// `max_{I_up} -y G - min_{I_low} -y G` at termination.
    pub kkt_gap: f64,
    /// Dual objective in minimization form.
    pub objective: f64,
    pub primal: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;

/// Relative duality-gap bound enforced at termination.
pub const GAP_REL: f64 = 1e-3;
/// Absolute slack added to the gap bound for near-zero objectives.
pub const GAP_ABS: f64 = 1e-9;

/// Runs SMO until the KKT gap is below `eps`, then keeps tightening `eps`
/// until the duality gap is within `GAP_REL * |primal| + GAP_ABS`.
pub fn solve(prob: &Problem<'_>, eps: f64, max_iter: usize) -> Result<Solution> {
    let l = prob.y.len();
    let mut st = State {
        alpha: vec![0.0; l],
        grad: prob.p.clone(),
        iter: 0,
    };
    let mut tol = eps;
    loop {
        let kkt = match run(prob, &mut st, tol, max_iter) {
            Some(g) => g,
            None => {
                let r = rho(&st.alpha, &st.grad, &prob.y, prob.c);
                return Err(Error::Convergence {
                    iterations: st.iter,
                    duality_gap: gaps(prob, &st, r).1,
                });
            }
        };
        let r = rho(&st.alpha, &st.grad, &prob.y, prob.c);
        let (primal, gap) = gaps(prob, &st, r);
        if gap <= GAP_REL * primal.abs() + GAP_ABS || tol < 1e-13 {
            if gap > GAP_REL * primal.abs() + GAP_ABS {
                return Err(Error::Convergence {
                    iterations: st.iter,
                    duality_gap: gap,
                });
            }
            let objective = dual_objective(prob, &st);
            return Ok(Solution {
                alpha: st.alpha,
                rho: r,
                kkt_gap: kkt,
                objective,
                primal,
                duality_gap: gap,
                iterations: st.iter,
            });
        }
        tol /= 10.0;
    }
}

struct State {
    alpha: Vec<f64>,
    grad: Vec<f64>,
    iter: usize,
}

fn dual_objective(prob: &Problem<'_>, st: &State) -> f64 {
    st.alpha
        .iter()
        .zip(&st.grad)
        .zip(&prob.p)
        .map(|((a, g), p)| 0.5 * a * (g + p))
        .sum()
}

/// Primal objective and duality gap for offset `rho`.
fn gaps(prob: &Problem<'_>, st: &State, rho: f64) -> (f64, f64) {
    let quad: f64 = st
        .alpha
        .iter()
        .zip(&st.grad)
        .zip(&prob.p)
        .map(|((a, g), p)| a * (g - p))
        .sum();
    let loss: f64 = st
        .grad
        .iter()
        .zip(&prob.y)
        .map(|(g, y)| (y * rho - g).max(0.0))
        .sum();
    let primal = 0.5 * quad + prob.c * loss;
    let dual = -dual_objective(prob, st);
    (primal, (primal - dual).max(0.0))
}

/// Returns the final KKT gap, or `None` when the iteration cap was hit.
fn run(prob: &Problem<'_>, st: &mut State, eps: f64, max_iter: usize) -> Option<f64> {
    let l = prob.y.len();
    let n = prob.gram.n();
    let c = prob.c;
    let y = &prob.y;
    let (alpha, grad) = (&mut st.alpha, &mut st.grad);
    let diag: Vec<f64> = (0..l).map(|t| prob.gram.get(t % n, t % n)).collect();
    let q = |s: usize, t: usize| y[s] * y[t] * prob.gram.get(s % n, t % n);

    let up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            if up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        let ki = if i == usize::MAX { None } else { Some(prob.gram.row(i % n)) };
        for t in 0..l {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if let Some(ki) = ki {
                let b = gmax - v;
                if b > 0.0 {
                    let a = diag[i] + diag[t] - 2.0 * ki[t % n];
                    let a = if a > 0.0 { a } else { TAU };
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        let gap = gmax - gmin;
        if gap < eps || j == usize::MAX || i == usize::MAX {
            return Some(gap.max(0.0));
        }
        if st.iter >= max_iter {
            return None;
        }
        st.iter += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        let (ki, kj) = (prob.gram.row(i % n), prob.gram.row(j % n));
        let (yi, yj) = (y[i], y[j]);
        for t in 0..l {
            let tn = t % n;
            grad[t] += y[t] * (yi * ki[tn] * di + yj * kj[tn] * dj);
        }
    }
}

/// Offset: mean of `y G` over free variables, else midpoint of the bounds.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

/// Largest KKT violation of `alpha` for `prob`, recomputed from scratch.
pub fn kkt_violation(prob: &Problem<'_>, alpha: &[f64]) -> f64 {
    let l = prob.y.len();
    let n = prob.gram.n();
    let grad: Vec<f64> = (0..l)
        .map(|s| {
            prob.p[s]
                + (0..l)
                    .filter(|&t| alpha[t] != 0.0)
                    .map(|t| prob.y[s] * prob.y[t] * prob.gram.get(s % n, t % n) * alpha[t])
                    .sum::<f64>()
        })
        .collect();
    let c = prob.c;
    let mut m = f64::NEG_INFINITY;
    let mut big_m = f64::INFINITY;
    for t in 0..l {
        let v = -prob.y[t] * grad[t];
        let (yt, a) = (prob.y[t], alpha[t]);
        if (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0) {
            m = m.max(v);
        }
        if (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c) {
            big_m = big_m.min(v);
        }
    }
    (m - big_m).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_split_evenly() {
        // x = -1, +1 with linear kernel: alpha = 0.5 each, rho = 0
        let g = Gram::from_fn(2, |i, j| [-1.0, 1.0][i] * [-1.0, 1.0][j]);
        let prob = Problem {
            gram: &g,
            y: vec![-1.0, 1.0],
            p: vec![-1.0, -1.0],
            c: 10.0,
        };
        let s = solve(&prob, 1e-6, 1000).unwrap();
        assert!((s.alpha[0] - 0.5).abs() < 1e-9);
        assert!((s.alpha[1] - 0.5).abs() < 1e-9);
        assert!(s.rho.abs() < 1e-9);
        assert!(kkt_violation(&prob, &s.alpha) < 1e-6);
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let xs = [0.0f64, 1.0, 2.0, 3.0];
        let g = Gram::from_fn(4, |i, j| (-(xs[i] - xs[j]) * (xs[i] - xs[j])).exp());
        let prob = Problem {
            gram: &g,
            y: vec![1.0, -1.0, 1.0, -1.0],
            p: vec![-1.0; 4],
            c: 100.0,
        };
        match solve(&prob, 1e-12, 1) {
            Err(Error::Convergence { iterations, duality_gap }) => {
                assert_eq!(iterations, 1);
                assert!(duality_gap > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
