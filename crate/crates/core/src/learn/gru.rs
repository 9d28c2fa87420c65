//! Gated recurrent network: one layer of update/reset-gated units whose
//! final state feeds the perceptron head.
//!
//! ```text
//! z = sig(Wz x + Uz h + bz)
//! r = sig(Wr x + Ur h + br)
//! c = tanh(Wh x + Uh (r * h) + bh)
//! h' = z * h + (1 - z) * c
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{loss_grad, Target, TargetScale, HIDDEN};
use super::{Hyperparams, TaskKind};
use crate::error::{Error, Result};
use crate::model::Label;
use crate::nn::{dot, Activation, Mlp, MlpGrads};

pub const UNITS: usize = 16;
pub const MIN_STEPS: usize = 2;
pub const DEFAULT_LR: f64 = 1e-2;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH: usize = 16;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate parameters; `w*` are `units x inputs`, `u*` are `units x units`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub inputs: usize,
    pub units: usize,
    pub wz: Vec<f64>,
    pub uz: Vec<f64>,
    pub bz: Vec<f64>,
    pub wr: Vec<f64>,
    pub ur: Vec<f64>,
    pub br: Vec<f64>,
    pub wh: Vec<f64>,
    pub uh: Vec<f64>,
    pub bh: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruGrads {
    pub cell: GruCell,
    pub head: MlpGrads,
}

struct Step {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    rh: Vec<f64>,
}

fn matvec(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, v);
    }
}

fn matvec_t(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (row, &g) in m.chunks_exact(cols).zip(v) {
        if g != 0.0 {
            for (o, w) in out.iter_mut().zip(row) {
                *o += g * w;
            }
        }
    }
}

fn outer_add(m: &mut [f64], cols: usize, g: &[f64], v: &[f64]) {
    for (row, &gi) in m.chunks_exact_mut(cols).zip(g) {
        if gi != 0.0 {
            for (w, x) in row.iter_mut().zip(v) {
                *w += gi * x;
            }
        }
    }
}

impl GruCell {
    pub fn new<R: Rng>(inputs: usize, units: usize, rng: &mut R) -> Self {
        let lim_w = (6.0 / (inputs + units) as f64).sqrt();
        let lim_u = (3.0 / units as f64).sqrt();
        let mut w = |n: usize, lim: f64| (0..n).map(|_| rng.random_range(-lim..lim)).collect::<Vec<f64>>();
        GruCell {
            inputs,
            units,
            wz: w(units * inputs, lim_w),
            uz: w(units * units, lim_u),
            bz: vec![0.0; units],
            wr: w(units * inputs, lim_w),
            ur: w(units * units, lim_u),
            br: vec![0.0; units],
            wh: w(units * inputs, lim_w),
            uh: w(units * units, lim_u),
            bh: vec![0.0; units],
        }
    }

    fn zeros_like(&self) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        GruCell {
            inputs: self.inputs,
            units: self.units,
            wz: z(&self.wz),
            uz: z(&self.uz),
            bz: z(&self.bz),
            wr: z(&self.wr),
            ur: z(&self.ur),
            br: z(&self.br),
            wh: z(&self.wh),
            uh: z(&self.uh),
            bh: z(&self.bh),
        }
    }

    fn parts(&self) -> [&Vec<f64>; 9] {
        [&self.wz, &self.uz, &self.bz, &self.wr, &self.ur, &self.br, &self.wh, &self.uh, &self.bh]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.wz,
            &mut self.uz,
            &mut self.bz,
            &mut self.wr,
            &mut self.ur,
            &mut self.br,
            &mut self.wh,
            &mut self.uh,
            &mut self.bh,
        ]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.parts().iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.parts().iter().map(|p| p.len()).sum()
    }

    fn set_flat(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for part in self.parts_mut() {
            part.iter_mut().for_each(|v| *v = it.next().expect("parameter count"));
        }
    }

    fn step_params(&mut self, g: &GruCell, lr: f64) {
        for (p, d) in self.parts_mut().into_iter().zip(g.parts()) {
            p.iter_mut().zip(d).for_each(|(w, dw)| *w -= lr * dw);
        }
    }

    fn forward(&self, seq: &[Vec<f64>], trace: Option<&mut Vec<Step>>) -> Vec<f64> {
        let (n, u) = (self.inputs, self.units);
        let mut h = vec![0.0; u];
        let mut trace = trace;
        for x in seq {
            let mut az = self.bz.clone();
            matvec(&self.wz, n, x, &mut az);
            matvec(&self.uz, u, &h, &mut az);
            let z: Vec<f64> = az.into_iter().map(sigmoid).collect();
            let mut ar = self.br.clone();
            matvec(&self.wr, n, x, &mut ar);
            matvec(&self.ur, u, &h, &mut ar);
            let r: Vec<f64> = ar.into_iter().map(sigmoid).collect();
            let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
            let mut ah = self.bh.clone();
            matvec(&self.wh, n, x, &mut ah);
            matvec(&self.uh, u, &rh, &mut ah);
            let c: Vec<f64> = ah.into_iter().map(f64::tanh).collect();
            let next: Vec<f64> = (0..u).map(|k| z[k] * h[k] + (1.0 - z[k]) * c[k]).collect();
            if let Some(t) = trace.as_deref_mut() {
                t.push(Step {
                    h_prev: std::mem::replace(&mut h, next),
                    z,
                    r,
                    c,
                    rh,
                });
            } else {
                h = next;
            }
        }
        h
    }

    /// Backpropagation through time from `dh` at the final state.
    fn backward(&self, seq: &[Vec<f64>], steps: &[Step], mut dh: Vec<f64>, g: &mut GruCell) {
        let (n, u) = (self.inputs, self.units);
        for (x, s) in seq.iter().zip(steps).rev() {
            let mut dprev: Vec<f64> = (0..u).map(|k| dh[k] * s.z[k]).collect();
            let dc: Vec<f64> = (0..u).map(|k| dh[k] * (1.0 - s.z[k])).collect();
            let dz: Vec<f64> = (0..u).map(|k| dh[k] * (s.h_prev[k] - s.c[k])).collect();
            let dah: Vec<f64> = (0..u).map(|k| dc[k] * (1.0 - s.c[k] * s.c[k])).collect();
            outer_add(&mut g.wh, n, &dah, x);
            outer_add(&mut g.uh, u, &dah, &s.rh);
            g.bh.iter_mut().zip(&dah).for_each(|(b, d)| *b += d);
            let mut drh = vec![0.0; u];
            matvec_t(&self.uh, u, &dah, &mut drh);
            let dr: Vec<f64> = (0..u).map(|k| drh[k] * s.h_prev[k]).collect();
            for k in 0..u {
                dprev[k] += drh[k] * s.r[k];
            }
            let daz: Vec<f64> = (0..u).map(|k| dz[k] * s.z[k] * (1.0 - s.z[k])).collect();
            let dar: Vec<f64> = (0..u).map(|k| dr[k] * s.r[k] * (1.0 - s.r[k])).collect();
            outer_add(&mut g.wz, n, &daz, x);
            outer_add(&mut g.uz, u, &daz, &s.h_prev);
            g.bz.iter_mut().zip(&daz).for_each(|(b, d)| *b += d);
            outer_add(&mut g.wr, n, &dar, x);
            outer_add(&mut g.ur, u, &dar, &s.h_prev);
            g.br.iter_mut().zip(&dar).for_each(|(b, d)| *b += d);
            matvec_t(&self.uz, u, &daz, &mut dprev);
            matvec_t(&self.ur, u, &dar, &mut dprev);
            dh = dprev;
        }
    }
}

/// Recurrent cell plus `16 -> 16 -> 8 -> out` perceptron head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub cell: GruCell,
    pub head: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub model: GruModel,
    pub task: TaskKind,
    pub scale: TargetScale,
}

impl GruModel {
    pub fn new(inputs: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = GruCell::new(inputs, UNITS, &mut rng);
        let head = Mlp::new(
            &[UNITS, HIDDEN[0], HIDDEN[1], outputs],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        GruModel { cell, head }
    }

    pub fn forward(&self, seq: &[Vec<f64>]) -> Vec<f64> {
        self.head.forward(&self.cell.forward(seq, None))
    }

    /// Mean loss over a batch and gradients of all parameters.
    pub fn loss_grads(&self, seqs: &[&[Vec<f64>]], ts: &[Target]) -> (f64, GruGrads) {
        let mut g = GruGrads {
            cell: self.cell.zeros_like(),
            head: self.head.zero_grads(),
        };
        let inv = 1.0 / seqs.len() as f64;
        let mut loss = 0.0;
        for (seq, &t) in seqs.iter().zip(ts) {
            let mut steps = Vec::with_capacity(seq.len());
            let h = self.cell.forward(seq, Some(&mut steps));
            let tr = self.head.forward_trace(&h);
            let (l, go) = loss_grad(tr.output(), t);
            loss += l * inv;
            let go: Vec<f64> = go.iter().map(|v| v * inv).collect();
            let dh = self.head.backward(&tr, &go, &mut g.head);
            self.cell.backward(seq, &steps, dh, &mut g.cell);
        }
        (loss, g)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.cell.flat();
        p.extend(self.head.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.cell.param_count();
        self.cell.set_flat(&p[..n]);
        self.head.set_params(&p[n..]);
    }

    fn step(&mut self, g: &GruGrads, lr: f64) {
        self.cell.step_params(&g.cell, lr);
        self.head.step(&g.head, lr);
    }
}

impl GruGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut p = self.cell.flat();
        p.extend(self.head.flat());
        p
    }

    fn is_finite(&self) -> bool {
        self.cell.flat().iter().all(|v| v.is_finite()) && self.head.is_finite()
    }
}

impl GruParams {
    pub fn output(&self, seq: &[Vec<f64>]) -> Vec<f64> {
        self.scale.output(self.task, self.model.forward(seq))
    }
}

pub(crate) fn gru_fit(
    seqs: &[Vec<Vec<f64>>],
    labels: &[Label],
    task: TaskKind,
    hp: &Hyperparams,
    seed: u64,
) -> Result<GruParams> {
    if let Some(i) = seqs.iter().position(|s| s.len() < MIN_STEPS) {
        return Err(Error::InvalidInput(format!("sequence {i} is shorter than {MIN_STEPS} steps")));
    }
    let lr = hp.get_or("lr", DEFAULT_LR);
    let epochs = hp.get_or("epochs", DEFAULT_EPOCHS as f64) as usize;
    let batch = hp.get_or("batch", DEFAULT_BATCH as f64) as usize;
    let (scale, targets, outputs) = TargetScale::targets(labels, task);
    let mut model = GruModel::new(seqs[0][0].len(), outputs, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x677275);

    // batches never mix sequence lengths
    let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in seqs.iter().enumerate() {
        by_len.entry(s.len()).or_default().push(i);
    }
    for epoch in 0..epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for idx in by_len.values() {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            batches.extend(idx.chunks(batch).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);
        for b in &batches {
            let xs: Vec<&[Vec<f64>]> = b.iter().map(|&i| seqs[i].as_slice()).collect();
            let ts: Vec<Target> = b.iter().map(|&i| targets[i]).collect();
            let (loss, g) = model.loss_grads(&xs, &ts);
            if !loss.is_finite() || !g.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            model.step(&g, lr);
        }
    }
    Ok(GruParams { model, task, scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_sequences_rejected() {
        let seqs = vec![vec![vec![1.0]], vec![vec![1.0], vec![2.0]]];
        let y = vec![Label::Regression { position_cm: 0.0 }, Label::Regression { position_cm: 1.0 }];
        assert!(gru_fit(&seqs, &y, TaskKind::Regression, &Hyperparams::new(), 0).is_err());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = GruModel::new(4, 1, 2);
        let seq: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let t = [Target::Value(0.3)];
        let (_, g) = model.loss_grads(&[&seq], &t);
        let p = model.params();
        let h = 1e-5;
        for (i, a) in g.flat().iter().enumerate().step_by(7) {
            let mut q = p.clone();
            let mut m = model.clone();
            q[i] = p[i] + h;
            m.set_params(&q);
            let up = m.loss_grads(&[&seq], &t).0;
            q[i] = p[i] - h;
            m.set_params(&q);
            let down = m.loss_grads(&[&seq], &t).0;
            let num = (up - down) / (2.0 * h);
            assert!((a - num).abs() <= 1e-6 * (1.0 + num.abs()), "param {i}: {a} vs {num}");
        }
    }
}
