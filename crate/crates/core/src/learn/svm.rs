use serde::{Deserialize, Serialize};

use super::smo::{self, Gram, Problem};
use super::{class_ids, TaskKind};
use crate::error::{Error, Result};
use crate::model::Label;

/// Target KKT gap for every SMO fit.
pub const KKT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => crate::nn::dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }

    /// Kernel value from a precomputed dot product or squared distance.
    #[inline]
    pub(crate) fn eval_base(self, dot: f64, sq: f64) -> f64 {
        match self {
            Kernel::Linear => dot,
            Kernel::Rbf { gamma } => (-gamma * sq).exp(),
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub kkt_gap: f64,
    pub duality_gap: f64,
    pub primal: f64,
    pub iterations: usize,
}

/// One decision function `sum_i coef_i K(sv_i, x) - rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub coef: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvmMode {
    Regression,
    /// One machine, positive side is class 1.
    Binary,
    OneVsRest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub mode: SvmMode,
    pub support: Vec<Vec<f64>>,
    pub machines: Vec<Machine>,
    pub reports: Vec<SolverReport>,
}

impl SvmParams {
    /// Regression value, or one margin score per class.
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.support.iter().map(|s| self.kernel.eval(s, x)).collect();
        let raw: Vec<f64> = self
            .machines
            .iter()
            .map(|m| crate::nn::dot(&m.coef, &k) - m.rho)
            .collect();
        scores(self.mode, raw)
    }
}

fn scores(mode: SvmMode, raw: Vec<f64>) -> Vec<f64> {
    match mode {
        SvmMode::Binary => vec![-raw[0], raw[0]],
        _ => raw,
    }
}

/// Dual solution over a training Gram matrix, before support compaction.
#[derive(Debug, Clone)]
pub(crate) struct GramFit {
    pub mode: SvmMode,
    pub machines: Vec<Machine>,
    pub reports: Vec<SolverReport>,
}

impl GramFit {
    /// Decision for a point given its kernel row against the training set.
    pub fn decision_from_row(&self, k: &[f64]) -> Vec<f64> {
        let raw = self
            .machines
            .iter()
            .map(|m| crate::nn::dot(&m.coef, k) - m.rho)
            .collect();
        scores(self.mode, raw)
    }
}

fn max_iter(l: usize) -> usize {
    (100 * l).max(10_000_000)
}

fn solve_one(gram: &Gram, y: Vec<f64>, p: Vec<f64>, c: f64) -> Result<(Machine, SolverReport)> {
    let n = gram.n();
    let prob = Problem { gram, y, p, c };
    let s = smo::solve(&prob, KKT_TOL, max_iter(prob.y.len()))?;
    let coef = if prob.y.len() == n {
        s.alpha.iter().zip(&prob.y).map(|(a, y)| a * y).collect()
    } else {
        (0..n).map(|i| s.alpha[i] - s.alpha[i + n]).collect()
    };
    Ok((
        Machine { coef, rho: s.rho },
        SolverReport {
            kkt_gap: s.kkt_gap,
            duality_gap: s.duality_gap,
            primal: s.primal,
            iterations: s.iterations,
        },
    ))
}

pub(crate) fn fit_gram(gram: &Gram, labels: &[Label], c: f64, epsilon: f64) -> Result<GramFit> {
    let n = gram.n();
    if labels.len() != n || n < 2 {
        return Err(Error::InvalidInput("svm needs at least 2 labelled samples".into()));
    }
    if !(c > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter("svm needs C > 0 and epsilon >= 0".into()));
    }
    let mut machines = Vec::new();
    let mut reports = Vec::new();
    let mode = match TaskKind::of(labels)? {
        TaskKind::Regression => {
            let z: Vec<f64> = labels.iter().map(Label::value).collect();
            let mut y = vec![1.0; n];
            y.extend(std::iter::repeat_n(-1.0, n));
            let p: Vec<f64> = z.iter().map(|v| epsilon - v).chain(z.iter().map(|v| epsilon + v)).collect();
            let (m, r) = solve_one(gram, y, p, c)?;
            machines.push(m);
            reports.push(r);
            SvmMode::Regression
        }
        TaskKind::Classification { class_count } => {
            let ids = class_ids(labels);
            let mut present: Vec<usize> = ids.clone();
            present.sort_unstable();
            present.dedup();
            if present.len() < 2 {
                return Err(Error::InvalidInput("classification needs at least two classes present".into()));
            }
            let positives: Vec<usize> = if class_count == 2 { vec![1] } else { (0..class_count).collect() };
            for k in positives {
                let y: Vec<f64> = ids.iter().map(|&c| if c == k { 1.0 } else { -1.0 }).collect();
                let (m, r) = solve_one(gram, y, vec![-1.0; n], c)?;
                machines.push(m);
                reports.push(r);
            }
            if class_count == 2 {
                SvmMode::Binary
            } else {
                SvmMode::OneVsRest
            }
        }
    };
    Ok(GramFit {
        mode,
        machines,
        reports,
    })
}

pub(crate) fn svm_fit(x: &[Vec<f64>], labels: &[Label], kernel: Kernel, c: f64, epsilon: f64) -> Result<SvmParams> {
    let gram = Gram::from_fn(x.len(), |i, j| kernel.eval(&x[i], &x[j]));
    let fit = fit_gram(&gram, labels, c, epsilon)?;
    Ok(compact(kernel, fit, x))
}

/// Keeps only rows with a non-zero coefficient in some machine.
pub(crate) fn compact(kernel: Kernel, fit: GramFit, x: &[Vec<f64>]) -> SvmParams {
    let keep: Vec<usize> = (0..x.len())
        .filter(|&i| fit.machines.iter().any(|m| m.coef[i] != 0.0))
        .collect();
    SvmParams {
        kernel,
        mode: fit.mode,
        support: keep.iter().map(|&i| x[i].clone()).collect(),
        machines: fit
            .machines
            .into_iter()
            .map(|m| Machine {
                coef: keep.iter().map(|&i| m.coef[i]).collect(),
                rho: m.rho,
            })
            .collect(),
        reports: fit.reports,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls(ids: &[usize], k: usize) -> Vec<Label> {
        ids.iter().map(|&i| Label::class(i, k).unwrap()).collect()
    }

    #[test]
    fn separable_pair_uses_both_points() {
        let x = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        let p = svm_fit(&x, &cls(&[0, 1], 2), Kernel::Linear, 10.0, 0.0).unwrap();
        assert_eq!(p.support.len(), 2);
        assert!(p.decision(&x[0])[0] > p.decision(&x[0])[1]);
        assert!(p.decision(&x[1])[1] > p.decision(&x[1])[0]);
        assert!(p.reports.iter().all(|r| r.kkt_gap <= KKT_TOL));
    }

    #[test]
    fn xor_solved_by_rbf() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = cls(&[0, 0, 1, 1], 2);
        let p = svm_fit(&x, &y, Kernel::Rbf { gamma: 1.0 }, 10.0, 0.0).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(super::super::argmax(&p.decision(xi)), yi.value() as usize);
        }
    }

    #[test]
    fn svr_tube_on_identity() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<Label> = (0..10).map(|i| Label::Regression { position_cm: i as f64 }).collect();
        let p = svm_fit(&x, &y, Kernel::Linear, 10.0, 0.1).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.decision(xi)[0] - yi.value()).abs() <= 0.1 + 1e-3);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(svm_fit(&x, &cls(&[1, 1], 3), Kernel::Linear, 1.0, 0.0).is_err());
    }
}
