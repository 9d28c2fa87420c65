use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpGrads};

pub const CODE_DIM: usize = 32;
const ENCODER_HIDDEN: [usize; 2] = [128, 64];
const DECODER_HIDDEN: [usize; 2] = [64, 128];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AutoencoderParams {
    fn default() -> Self {
        AutoencoderParams {
            epochs: 40,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Encoder `d -> 128 -> 64 -> 32` and decoder `32 -> 64 -> 128 -> d`.
///
/// Inputs are centred and divided by one global scale before entering the
/// network, so every dimension keeps its relative weight in the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl AutoencoderModel {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = [input_dim, ENCODER_HIDDEN[0], ENCODER_HIDDEN[1], CODE_DIM];
        let dec = [CODE_DIM, DECODER_HIDDEN[0], DECODER_HIDDEN[1], input_dim];
        AutoencoderModel {
            encoder: Mlp::new(&enc, Activation::Relu, Activation::Identity, &mut rng),
            decoder: Mlp::new(&dec, Activation::Relu, Activation::Identity, &mut rng),
            mean: vec![0.0; input_dim],
            scale: 1.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).map(|(x, m)| (x - m) / self.scale).collect()
    }

    /// Mean squared reconstruction error on normalized inputs, with gradients.
    pub fn loss_and_grads(&self, batch: &[&[f64]]) -> (f64, MlpGrads, MlpGrads) {
        let mut ge = self.encoder.zero_grads();
        let mut gd = self.decoder.zero_grads();
        let d = self.input_dim() as f64;
        let norm = 1.0 / (batch.len() as f64 * d);
        let mut loss = 0.0;
        for x in batch {
            let z = self.normalize(x);
            let te = self.encoder.forward_trace(&z);
            let td = self.decoder.forward_trace(te.output());
            let err: Vec<f64> = td.output().iter().zip(&z).map(|(a, b)| a - b).collect();
            loss += err.iter().map(|e| e * e).sum::<f64>() * norm;
            let g: Vec<f64> = err.iter().map(|e| 2.0 * e * norm).collect();
            let gc = self.decoder.backward(&td, &g, &mut gd);
            self.encoder.backward(&te, &gc, &mut ge);
        }
        (loss, ge, gd)
    }

    pub fn reconstruction_loss(&self, data: &[&[f64]]) -> f64 {
        let d = self.input_dim() as f64;
        data.iter()
            .map(|x| {
                let z = self.normalize(x);
                let r = self.decoder.forward(&self.encoder.forward(&z));
                r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d
            })
            .sum::<f64>()
            / data.len() as f64
    }

    pub fn reconstruct(&self, v: &[f64]) -> Vec<f64> {
        let r = self.decoder.forward(&self.encoder.forward(&self.normalize(v)));
        r.iter().zip(&self.mean).map(|(x, m)| x * self.scale + m).collect()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.encoder.param_count();
        self.encoder.set_params(&p[..n]);
        self.decoder.set_params(&p[n..]);
    }
}

pub fn autoencoder_fit(features: &[FeatureVector], hp: &AutoencoderParams) -> Result<AutoencoderModel> {
    if features.len() < 2 {
        return Err(Error::InvalidInput("autoencoder needs at least 2 training vectors".into()));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(Error::InvalidInput("autoencoder inputs must share a non-zero dimension".into()));
    }
    if !(hp.learning_rate > 0.0) || hp.epochs == 0 || hp.batch_size == 0 {
        return Err(Error::InvalidParameter("autoencoder needs lr > 0, epochs >= 1, batch >= 1".into()));
    }
    let n = features.len() as f64;
    let mut model = AutoencoderModel::new(dim, hp.seed);
    model.mean = (0..dim)
        .map(|j| features.iter().map(|f| f.values()[j]).sum::<f64>() / n)
        .collect();
    let var = features
        .iter()
        .map(|f| {
            f.values()
                .iter()
                .zip(&model.mean)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (n * dim as f64);
    model.scale = if var > 1e-24 { var.sqrt() } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0xae);
    let mut order: Vec<usize> = (0..features.len()).collect();
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| features[i].values()).collect();
            let (loss, ge, gd) = model.loss_and_grads(&batch);
            if !loss.is_finite() || !ge.is_finite() || !gd.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            model.encoder.step(&ge, hp.learning_rate);
            model.decoder.step(&gd, hp.learning_rate);
        }
    }
    Ok(model)
}

pub fn autoencoder_encode(m: &AutoencoderModel, v: &FeatureVector) -> Result<FeatureVector> {
    if v.len() != m.input_dim() {
        return Err(Error::InvalidInput(format!(
            "autoencoder expects {} inputs, got {}",
            m.input_dim(),
            v.len()
        )));
    }
    FeatureVector::new(m.encoder.forward(&m.normalize(v.values())), "autoencoder(code=32)".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn low_rank(n: usize, dim: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let v = (0..dim).map(|j| a * basis[0][j] + b * basis[1][j] + 3.0).collect();
                FeatureVector::new(v, "t".into()).unwrap()
            })
            .collect()
    }

    #[test]
    fn code_is_32_dims() {
        let data = low_rank(4, 7, 1);
        let m = autoencoder_fit(&data, &AutoencoderParams { epochs: 1, ..Default::default() }).unwrap();
        assert_eq!(autoencoder_encode(&m, &data[0]).unwrap().len(), CODE_DIM);
        let wrong = FeatureVector::new(vec![0.0; 3], "t".into()).unwrap();
        assert!(matches!(autoencoder_encode(&m, &wrong), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn learns_two_dim_subspace() {
        let data = low_rank(200, 20, 4);
        let hp = AutoencoderParams::default();
        let m = autoencoder_fit(&data, &hp).unwrap();
        let mut init = AutoencoderModel::new(20, hp.seed);
        init.mean = m.mean.clone();
        init.scale = m.scale;
        let refs: Vec<&[f64]> = data.iter().map(|f| f.values()).collect();
        // normalized inputs have unit mean variance, so the loss is a variance fraction
        let after = m.reconstruction_loss(&refs);
        assert!(after <= init.reconstruction_loss(&refs));
        assert!(after < 0.05, "relative error {after}");
    }

    #[test]
    fn fit_is_deterministic() {
        let data = low_rank(20, 6, 2);
        let hp = AutoencoderParams { epochs: 3, ..Default::default() };
        assert_eq!(autoencoder_fit(&data, &hp).unwrap(), autoencoder_fit(&data, &hp).unwrap());
    }
}
