//! Oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex;
use vibrotactile::nn::Mlp;

/// Central finite difference of `f` at every index in `which`.
pub fn numeric_grad(f: impl Fn(&[f64]) -> f64, p: &[f64], which: &[usize], h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    which
        .iter()
        .map(|&i| {
            q[i] = p[i] + h;
            let a = f(&q);
            q[i] = p[i] - h;
            let b = f(&q);
            q[i] = p[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

/// Central differences for piecewise-smooth `f`. The step for a parameter is
/// halved until `pattern` (the set of active pieces) agrees at both probe
/// points with the base point; parameters that never settle give `None`.
pub fn numeric_grad_piecewise<P: PartialEq>(
    f: impl Fn(&[f64]) -> f64,
    pattern: impl Fn(&[f64]) -> P,
    p: &[f64],
    which: &[usize],
    h: f64,
) -> Vec<Option<f64>> {
    let base = pattern(p);
    let mut q = p.to_vec();
    which
        .iter()
        .map(|&i| {
            let mut step = h;
            for _ in 0..12 {
                q[i] = p[i] + step;
                let (a, pa) = (f(&q), pattern(&q));
                q[i] = p[i] - step;
                let (b, pb) = (f(&q), pattern(&q));
                q[i] = p[i];
                if pa == base && pb == base {
                    return Some((a - b) / (2.0 * step));
                }
                step /= 2.0;
            }
            None
        })
        .collect()
}

/// Sign of every hidden pre-activation of `net` over `inputs`, computed
/// directly from the weights.
pub fn hidden_signs(net: &Mlp, inputs: &[f64]) -> Vec<bool> {
    let mut signs = Vec::new();
    let hidden = &net.layers[..net.layers.len() - 1];
    for &x in inputs {
        let mut cur = vec![x];
        for l in hidden {
            cur = (0..l.outputs)
                .map(|o| {
                    let z = l.bias[o] + (0..l.inputs).map(|i| l.weights[o * l.inputs + i] * cur[i]).sum::<f64>();
                    signs.push(z > 0.0);
                    l.activation.apply(z)
                })
                .collect();
        }
    }
    signs
}

/// Components below this magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Worst relative error between analytic and numeric gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(&a, &b)| rel_err(a, b)).fold(0.0, f64::max)
}

/// O(n^2) DFT with exact integer phase reduction.
pub fn naive_dft(x: &[f64]) -> Vec<Complex<f64>> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex::new(0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                acc += Complex::new(ph.cos(), ph.sin()) * v;
            }
            acc
        })
        .collect()
}

/// Maximum-violating-pair gap of the box-constrained dual
/// `min 1/2 a'Qa + p'a, y'a = 0, 0 <= a <= C` with `Q_st = y_s y_t K_st`.
pub fn dual_kkt_gap(k: impl Fn(usize, usize) -> f64, y: &[f64], p: &[f64], c: f64, alpha: &[f64]) -> f64 {
    let l = y.len();
    let grad: Vec<f64> = (0..l)
        .map(|s| p[s] + (0..l).map(|t| y[s] * y[t] * k(s, t) * alpha[t]).sum::<f64>())
        .collect();
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for t in 0..l {
        let v = -y[t] * grad[t];
        let can_up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
        let can_low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
        if can_up {
            up = up.max(v);
        }
        if can_low {
            low = low.min(v);
        }
    }
    (up - low).max(0.0)
}
