use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Hyperparams, TaskKind};
use crate::error::{Error, Result};
use crate::model::Label;
use crate::nn::{softmax_xent, Activation, Mlp, MlpGrads};

pub const HIDDEN: [usize; 2] = [16, 8];
pub const DEFAULT_LR: f64 = 1e-2;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_BATCH: usize = 32;

/// Per-sample training target in network units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Standardized regression value.
    Value(f64),
    Class(usize),
}

/// Loss of one output and its gradient with respect to that output.
pub(crate) fn loss_grad(out: &[f64], t: Target) -> (f64, Vec<f64>) {
    match t {
        Target::Value(v) => {
            let e = out[0] - v;
            (e * e, vec![2.0 * e])
        }
        Target::Class(c) => softmax_xent(out, c),
    }
}

/// Target scaling shared by the perceptron and recurrent heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub fn identity() -> Self {
        TargetScale { mean: 0.0, std: 1.0 }
    }

    pub(crate) fn targets(labels: &[Label], task: TaskKind) -> (Self, Vec<Target>, usize) {
        match task {
            TaskKind::Regression => {
                let y: Vec<f64> = labels.iter().map(Label::value).collect();
                let n = y.len() as f64;
                let mean = y.iter().sum::<f64>() / n;
                let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                let s = TargetScale {
                    mean,
                    std: if sd > 1e-12 { sd } else { 1.0 },
                };
                let t = y.iter().map(|v| Target::Value((v - s.mean) / s.std)).collect();
                (s, t, 1)
            }
            TaskKind::Classification { class_count } => (
                TargetScale::identity(),
                labels.iter().map(|l| Target::Class(l.value() as usize)).collect(),
                class_count,
            ),
        }
    }

    pub(crate) fn output(&self, task: TaskKind, mut out: Vec<f64>) -> Vec<f64> {
        if task == TaskKind::Regression {
            out[0] = out[0] * self.std + self.mean;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub net: Mlp,
    pub task: TaskKind,
    pub scale: TargetScale,
}

impl MlpParams {
    pub fn new(input_dim: usize, task: TaskKind, seed: u64) -> Self {
        let outputs = match task {
            TaskKind::Regression => 1,
            TaskKind::Classification { class_count } => class_count,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpParams {
            net: Mlp::new(
                &[input_dim, HIDDEN[0], HIDDEN[1], outputs],
                Activation::Relu,
                Activation::Identity,
                &mut rng,
            ),
            task,
            scale: TargetScale::identity(),
        }
    }

    /// Mean loss over a batch and its parameter gradient.
    pub fn loss_grads(&self, xs: &[&[f64]], ts: &[Target]) -> (f64, MlpGrads) {
        let mut g = self.net.zero_grads();
        let inv = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        for (x, &t) in xs.iter().zip(ts) {
            let tr = self.net.forward_trace(x);
            let (l, go) = loss_grad(tr.output(), t);
            loss += l * inv;
            let go: Vec<f64> = go.iter().map(|v| v * inv).collect();
            self.net.backward(&tr, &go, &mut g);
        }
        (loss, g)
    }

    /// Prediction in label units (scores for classification).
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.scale.output(self.task, self.net.forward(x))
    }
}

pub(crate) fn mlp_fit(x: &[Vec<f64>], labels: &[Label], task: TaskKind, hp: &Hyperparams, seed: u64) -> Result<MlpParams> {
    let lr = hp.get_or("lr", DEFAULT_LR);
    let epochs = hp.get_or("epochs", DEFAULT_EPOCHS as f64) as usize;
    let batch = hp.get_or("batch", DEFAULT_BATCH as f64) as usize;
    let mut m = MlpParams::new(x[0].len(), task, seed);
    let (scale, targets, _) = TargetScale::targets(labels, task);
    m.scale = scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6c70);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| x[i].as_slice()).collect();
            let ts: Vec<Target> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, g) = m.loss_grads(&xs, &ts);
            if !loss.is_finite() || !g.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            m.net.step(&g, lr);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_label_is_learned() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 1.0]).collect();
        let y: Vec<Label> = (0..20).map(|_| Label::Regression { position_cm: 7.5 }).collect();
        let hp = Hyperparams::new().with("epochs", 300.0).with("lr", 0.05).with("batch", 4.0);
        let m = mlp_fit(&x, &y, TaskKind::Regression, &hp, 1).unwrap();
        for xi in &x {
            assert!((m.output(xi)[0] - 7.5).abs() < 1e-2, "{}", m.output(xi)[0]);
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 100.0]).collect();
        let y: Vec<Label> = (0..8).map(|i| Label::Regression { position_cm: i as f64 }).collect();
        let hp = Hyperparams::new().with("lr", 1e6).with("epochs", 50.0);
        assert!(matches!(
            mlp_fit(&x, &y, TaskKind::Regression, &hp, 0),
            Err(Error::Divergence { .. })
        ));
    }
}
