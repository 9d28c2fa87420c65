use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::smo::Gram;
use super::svm::{fit_gram, sq_dist, Kernel};
use super::{class_ids, fit, Family, FitOptions, Hyperparams, Inputs, Standardizer, TaskKind};
use crate::error::{Error, Result};
use crate::model::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scorer {
    /// Mean absolute error, lower is better.
    Mae,
    /// Fraction correct, higher is better.
    Accuracy,
}

impl Scorer {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Regression => Scorer::Mae,
            TaskKind::Classification { .. } => Scorer::Accuracy,
        }
    }

    pub fn score(self, pred: &[Label], truth: &[Label]) -> f64 {
        let n = truth.len().max(1) as f64;
        match self {
            Scorer::Mae => pred.iter().zip(truth).map(|(p, t)| (p.value() - t.value()).abs()).sum::<f64>() / n,
            Scorer::Accuracy => pred.iter().zip(truth).filter(|(p, t)| p.value() == t.value()).count() as f64 / n,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Scorer::Mae => a < b,
            Scorer::Accuracy => a > b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Mae => "mae_cm",
            Scorer::Accuracy => "accuracy",
        }
    }
}

/// Validation index sets for `k`-fold cross-validation.
///
/// Classification folds are stratified: each class is shuffled and dealt
/// round-robin. A split whose training part has fewer than two classes is
/// re-drawn with a derived seed a few times before giving up.
pub fn folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k < 2 || n < k {
        return Err(Error::InvalidInput(format!("{n} samples cannot form {k} folds")));
    }
    match TaskKind::of(labels)? {
        TaskKind::Regression => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            Ok(deal(&idx, k))
        }
        TaskKind::Classification { class_count } => {
            let ids = class_ids(labels);
            for attempt in 0..8u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9)));
                let mut order = Vec::with_capacity(n);
                for c in 0..class_count {
                    let mut members: Vec<usize> = (0..n).filter(|&i| ids[i] == c).collect();
                    members.shuffle(&mut rng);
                    order.extend(members);
                }
                let fs = deal(&order, k);
                let ok = fs.iter().all(|val| {
                    let mut seen: Vec<usize> = (0..n).filter(|i| !val.contains(i)).map(|i| ids[i]).collect();
                    seen.sort_unstable();
                    seen.dedup();
                    seen.len() >= 2
                });
                if ok {
                    return Ok(fs);
                }
            }
            Err(Error::Stratification(format!(
                "cannot form {k} folds whose training parts hold two classes"
            )))
        }
    }
}

fn deal(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut fs = vec![Vec::new(); k];
    for (p, &i) in order.iter().enumerate() {
        fs[p % k].push(i);
    }
    fs.iter_mut().for_each(|f| f.sort_unstable());
    fs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: Hyperparams,
    pub best_index: usize,
    /// Mean validation metric per grid point, in grid order.
    pub mean_scores: Vec<f64>,
    pub scorer: Scorer,
}

/// Picks the grid point with the best mean validation score; ties go to
/// the earliest point.
pub fn grid_search_cv(
    x: &Inputs,
    labels: &[Label],
    family: Family,
    grid: &[Hyperparams],
    k: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    if x.len() != labels.len() {
        return Err(Error::InvalidInput("inputs and labels differ in length".into()));
    }
    let scorer = Scorer::for_task(TaskKind::of(labels)?);
    let fs = folds(labels, k, seed)?;
    let n = labels.len();
    let per_fold: Vec<Vec<f64>> = fs
        .par_iter()
        .map(|val| {
            let train: Vec<usize> = (0..n).filter(|i| val.binary_search(i).is_err()).collect();
            fold_scores(x, labels, family, grid, &train, val, scorer, opts)
        })
        .collect::<Result<_>>()?;
    let mean_scores: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / k as f64)
        .collect();
    let mut best = 0;
    for (i, &s) in mean_scores.iter().enumerate() {
        if scorer.better(s, mean_scores[best]) {
            best = i;
        }
    }
    Ok(CvResult {
        best: grid[best].clone(),
        best_index: best,
        mean_scores,
        scorer,
    })
}

#[allow(clippy::too_many_arguments)]
fn fold_scores(
    x: &Inputs,
    labels: &[Label],
    family: Family,
    grid: &[Hyperparams],
    train: &[usize],
    val: &[usize],
    scorer: Scorer,
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    let xt = x.subset(train);
    let xv = x.subset(val);
    let yt: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
    let yv: Vec<Label> = val.iter().map(|&i| labels[i]).collect();
    match (family, &xt, &xv) {
        (Family::SvmLinear | Family::SvmRbf, Inputs::Vectors(_), Inputs::Vectors(_)) => {
            let (xt, xv) = if opts.standardize {
                let s = Standardizer::fit(&xt);
                (s.apply(&xt), s.apply(&xv))
            } else {
                (xt, xv)
            };
            let (Inputs::Vectors(xt), Inputs::Vectors(xv)) = (xt, xv) else {
                unreachable!("standardizing keeps the input kind")
            };
            svm_fold_scores(&xt, &xv, &yt, &yv, family, grid, scorer)
        }
        _ => grid
            .iter()
            .map(|hp| {
                let m = fit(family, hp, &xt, &yt, opts)?;
                Ok(scorer.score(&m.predict_batch(&xv)?, &yv))
            })
            .collect(),
    }
}

/// Shares one distance matrix across all grid points of a fold.
fn svm_fold_scores(
    xt: &[Vec<f64>],
    xv: &[Vec<f64>],
    yt: &[Label],
    yv: &[Label],
    family: Family,
    grid: &[Hyperparams],
    scorer: Scorer,
) -> Result<Vec<f64>> {
    let linear = family == Family::SvmLinear;
    let base = |a: &[f64], b: &[f64]| if linear { crate::nn::dot(a, b) } else { sq_dist(a, b) };
    let nt = xt.len();
    let tt = Gram::from_fn(nt, |i, j| base(&xt[i], &xt[j]));
    let vt: Vec<Vec<f64>> = xv.iter().map(|v| xt.iter().map(|t| base(v, t)).collect()).collect();
    grid.iter()
        .map(|hp| {
            hp.validate()?;
            let kernel = if linear {
                Kernel::Linear
            } else {
                Kernel::Rbf {
                    gamma: hp.require("gamma")?,
                }
            };
            let kb = |b: f64| if linear { kernel.eval_base(b, 0.0) } else { kernel.eval_base(0.0, b) };
            let gram = Gram::from_fn(nt, |i, j| kb(tt.get(i, j)));
            let f = fit_gram(&gram, yt, hp.require("C")?, hp.get_or("epsilon", 0.1))?;
            let pred: Vec<Label> = vt
                .iter()
                .map(|row| {
                    let k: Vec<f64> = row.iter().map(|&b| kb(b)).collect();
                    to_label(yt[0], f.decision_from_row(&k))
                })
                .collect();
            Ok(scorer.score(&pred, yv))
        })
        .collect()
}

fn to_label(like: Label, out: Vec<f64>) -> Label {
    match like {
        Label::Regression { .. } => Label::Regression { position_cm: out[0] },
        Label::Class { class_count, .. } => Label::Class {
            id: super::argmax(&out),
            class_count,
        },
    }
}

/// Conventional log-spaced grids per family.
pub fn default_grid(family: Family, task: TaskKind, input_dim: usize) -> Vec<Hyperparams> {
    let cs = [0.1, 1.0, 10.0, 100.0];
    let gammas = [0.01, 0.1, 1.0, 10.0];
    let eps: &[f64] = match task {
        TaskKind::Regression => &[0.01, 0.1],
        TaskKind::Classification { .. } => &[],
    };
    let with_eps = |hp: Hyperparams| -> Vec<Hyperparams> {
        if eps.is_empty() {
            vec![hp]
        } else {
            eps.iter().map(|&e| hp.clone().with("epsilon", e)).collect()
        }
    };
    let d = input_dim.max(1) as f64;
    match family {
        Family::SvmLinear => cs.iter().flat_map(|&c| with_eps(Hyperparams::new().with("C", c))).collect(),
        Family::SvmRbf => cs
            .iter()
            .flat_map(|&c| {
                gammas
                    .iter()
                    .flat_map(move |&g| with_eps(Hyperparams::new().with("C", c).with("gamma", g / d)))
            })
            .collect(),
        Family::Mlp => [1e-3, 1e-2]
            .iter()
            .map(|&lr| Hyperparams::new().with("lr", lr).with("epochs", 200.0))
            .collect(),
        Family::Gru => [1e-3, 1e-2]
            .iter()
            .map(|&lr| Hyperparams::new().with("lr", lr).with("epochs", 100.0))
            .collect(),
    }
}
