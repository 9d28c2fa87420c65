//! Event spike tensor features: events of each taxel and polarity are
//! convolved with a causal temporal kernel and the result is sampled on a
//! regular grid across the window.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::model::{Polarity, SpikeTrain};
use crate::nn::{softmax_xent, Activation, Dense, Mlp, MlpGrads};

pub const DEFAULT_SAMPLES: usize = 50;
pub const HIDDEN: usize = 30;
pub const LEAK: f64 = 0.01;

/// Temporal kernel applied to `delta = t_sample - t_event`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EstKernel {
    /// `max(0, 1 - delta / width)` for `delta >= 0`.
    Triangle { width_us: f64 },
    Learned(EstNet),
}

impl EstKernel {
    pub fn id(&self) -> String {
        match self {
            EstKernel::Triangle { width_us } => format!("triangle({width_us})"),
            EstKernel::Learned(_) => "learned".into(),
        }
    }
}

/// Scalar kernel network `1 -> 30 -> 30 -> 1` with leaky rectifiers. The
/// input is `delta / window`, so it lies in `[-1, 1]`; negative deltas are
/// masked to zero before the network is consulted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstNet {
    pub mlp: Mlp,
    #[serde(skip)]
    cache: Option<Cache>,
}

impl PartialEq for EstNet {
    fn eq(&self, other: &Self) -> bool {
        self.mlp == other.mlp
    }
}

#[derive(Debug, Clone)]
struct Cache {
    train: SpikeTrain,
    n_samples: usize,
}

impl EstNet {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EstNet {
            mlp: Mlp::new(&[1, HIDDEN, HIDDEN, 1], Activation::LeakyRelu(LEAK), Activation::Identity, &mut rng),
            cache: None,
        }
    }

    /// Random network regressed onto a triangle of relative width
    /// `width_frac` (fraction of the window).
    pub fn triangle_init(width_frac: f64, seed: u64) -> Self {
        let mut net = EstNet::random(seed);
        let xs: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        let target = |x: f64| (1.0 - x / width_frac).max(0.0);
        for _ in 0..3000 {
            let mut g = net.mlp.zero_grads();
            for &x in &xs {
                let tr = net.mlp.forward_trace(&[x]);
                let e = tr.output()[0] - target(x);
                net.mlp.backward(&tr, &[2.0 * e / xs.len() as f64], &mut g);
            }
            net.mlp.step(&g, 0.05);
        }
        net
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.mlp.forward(&[x])[0]
    }

    /// Forward pass that remembers its input for [`est_kernel_grad`].
    pub fn forward_cached(&mut self, train: &SpikeTrain, n_samples: usize) -> Result<FeatureVector> {
        let kernel = EstKernel::Learned(EstNet {
            mlp: self.mlp.clone(),
            cache: None,
        });
        let v = est_features(train, &kernel, n_samples)?;
        self.cache = Some(Cache {
            train: train.clone(),
            n_samples,
        });
        Ok(v)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Sample times `(j + 1) * D / n` rounded to whole microseconds.
pub fn sample_times(duration_us: u64, n: usize) -> Vec<u64> {
    (1..=n)
        .map(|j| (j as f64 * duration_us as f64 / n as f64).round() as u64)
        .collect()
}

fn channel_index(taxel: u32, p: Polarity) -> usize {
    taxel as usize * 2
        + match p {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
}

/// Visits every causal (event, sample) pair as `(delta_us, feature index)`.
fn for_each_pair(train: &SpikeTrain, times: &[u64], mut f: impl FnMut(u64, usize)) {
    let n = times.len();
    for e in train.events() {
        let base = channel_index(e.taxel, e.polarity) * n;
        let first = times.partition_point(|&t| t < e.t.0);
        for (j, &t) in times.iter().enumerate().skip(first) {
            f(t - e.t.0, base + j);
        }
    }
}

/// Layout: taxel-major, then polarity (positive, negative), then sample.
pub fn est_features(train: &SpikeTrain, kernel: &EstKernel, n_samples: usize) -> Result<FeatureVector> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("est needs at least one sample".into()));
    }
    let d = train.duration_us();
    let times = sample_times(d, n_samples);
    let mut values = vec![0.0; train.taxel_count() * 2 * n_samples];
    match kernel {
        EstKernel::Triangle { width_us } => {
            if !(*width_us > 0.0) {
                return Err(Error::InvalidParameter("triangle width must be positive".into()));
            }
            for_each_pair(train, &times, |delta, idx| {
                values[idx] += (1.0 - delta as f64 / width_us).max(0.0);
            });
        }
        EstKernel::Learned(net) => {
            let mut table: HashMap<u64, f64> = HashMap::new();
            for_each_pair(train, &times, |delta, idx| {
                values[idx] += *table
                    .entry(delta)
                    .or_insert_with(|| net.eval(delta as f64 / d as f64));
            });
        }
    }
    FeatureVector::new(values, format!("est(kernel={},samples={n_samples})", kernel.id()))
}

/// Gradient of `sum_f upstream[f] * feature[f]` with respect to the kernel
/// network, for the train seen by the last [`EstNet::forward_cached`].
pub fn est_kernel_grad(net: &EstNet, upstream: &[f64]) -> Result<MlpGrads> {
    let cache = net
        .cache
        .as_ref()
        .ok_or_else(|| Error::Usage("est_kernel_grad called without a cached forward pass".into()))?;
    let train = &cache.train;
    let expect = train.taxel_count() * 2 * cache.n_samples;
    if upstream.len() != expect {
        return Err(Error::InvalidInput(format!(
            "upstream gradient has {} entries, features have {expect}",
            upstream.len()
        )));
    }
    let d = train.duration_us() as f64;
    let times = sample_times(train.duration_us(), cache.n_samples);
    let mut weight: HashMap<u64, f64> = HashMap::new();
    for_each_pair(train, &times, |delta, idx| {
        *weight.entry(delta).or_insert(0.0) += upstream[idx];
    });
    let mut deltas: Vec<(u64, f64)> = weight.into_iter().filter(|(_, w)| *w != 0.0).collect();
    deltas.sort_by_key(|(k, _)| *k);
    let mut grads = net.mlp.zero_grads();
    for (delta, w) in deltas {
        let tr = net.mlp.forward_trace(&[delta as f64 / d]);
        net.mlp.backward(&tr, &[w], &mut grads);
    }
    Ok(grads)
}

/// Targets for fitting a learned kernel jointly with a linear head.
#[derive(Debug, Clone, Copy)]
pub enum EstTargets<'a> {
    Regression(&'a [f64]),
    Classes { ids: &'a [usize], count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstFitParams {
    pub n_samples: usize,
    pub epochs: usize,
    pub kernel_lr: f64,
    pub head_lr: f64,
    /// Upper bound on recordings used for the kernel fit.
    pub max_recordings: usize,
    /// Initial triangle width as a fraction of the window.
    pub init_width_frac: f64,
    pub seed: u64,
}

impl Default for EstFitParams {
    fn default() -> Self {
        EstFitParams {
            n_samples: DEFAULT_SAMPLES,
            epochs: 5,
            kernel_lr: 1e-4,
            head_lr: 1e-3,
            max_recordings: 64,
            init_width_frac: 0.04,
            seed: 0,
        }
    }
}

/// Fits the kernel end to end through a linear head on a seeded subsample.
pub fn est_fit_kernel(trains: &[&SpikeTrain], targets: EstTargets<'_>, p: &EstFitParams) -> Result<EstNet> {
    let n = trains.len();
    let ok = match targets {
        EstTargets::Regression(y) => y.len() == n,
        EstTargets::Classes { ids, count } => ids.len() == n && count >= 2 && ids.iter().all(|&c| c < count),
    };
    if n < 2 || !ok {
        return Err(Error::InvalidInput("est kernel fit needs >= 2 recordings with matching targets".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut pick: Vec<usize> = (0..n).collect();
    pick.shuffle(&mut rng);
    pick.truncate(p.max_recordings.max(2));

    let mut net = EstNet::triangle_init(p.init_width_frac, p.seed);
    let (outputs, ymean, ystd) = match targets {
        EstTargets::Regression(y) => {
            let m = pick.iter().map(|&i| y[i]).sum::<f64>() / pick.len() as f64;
            let v = pick.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>() / pick.len() as f64;
            (1, m, v.sqrt().max(1e-12))
        }
        EstTargets::Classes { count, .. } => (count, 0.0, 1.0),
    };
    let init = est_features(trains[pick[0]], &EstKernel::Learned(net.clone()), p.n_samples)?;
    let dim = init.len();
    // one global input scale keeps the head well conditioned
    let scale = {
        let s: f64 = pick
            .iter()
            .map(|&i| {
                est_features(trains[i], &EstKernel::Learned(net.clone()), p.n_samples)
                    .map(|f| f.values().iter().map(|v| v * v).sum::<f64>() / dim as f64)
            })
            .sum::<Result<f64>>()?;
        (s / pick.len() as f64).sqrt().max(1e-12)
    };
    let mut head = Dense::new(dim, outputs, Activation::Identity, &mut rng);
    for epoch in 0..p.epochs {
        pick.shuffle(&mut rng);
        for &i in &pick {
            let f = net.forward_cached(trains[i], p.n_samples)?;
            let x: Vec<f64> = f.values().iter().map(|v| v / scale).collect();
            let mut pre = vec![0.0; outputs];
            let mut out = vec![0.0; outputs];
            head.forward_into(&x, &mut pre, &mut out);
            let g = match targets {
                EstTargets::Regression(y) => vec![2.0 * (out[0] - (y[i] - ymean) / ystd)],
                EstTargets::Classes { ids, .. } => softmax_xent(&out, ids[i]).1,
            };
            let mut hg = head.zero_grads();
            let mut gx = vec![0.0; dim];
            head.backward(&x, &pre, &g, &mut hg, Some(&mut gx));
            gx.iter_mut().for_each(|v| *v /= scale);
            let kg = est_kernel_grad(&net, &gx)?;
            if !kg.is_finite() || !out.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            head.step(&hg, p.head_lr);
            net.mlp.step(&kg, p.kernel_lr);
        }
    }
    net.clear_cache();
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SpikeEvent, TaxelLayout};

    fn layout() -> Vec<TaxelLayout> {
        vec![TaxelLayout::new(2, 2, "x").unwrap()]
    }

    #[test]
    fn empty_train_gives_zeros() {
        let t = SpikeTrain::empty(layout(), 4000.0, 300_000).unwrap();
        let v = est_features(&t, &EstKernel::Triangle { width_us: 10_000.0 }, 50).unwrap();
        assert_eq!(v.len(), 4 * 2 * 50);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_event_traces_triangle() {
        let w = 20_000.0;
        let t0 = 10_000;
        let t = SpikeTrain::new(layout(), vec![SpikeEvent::new(t0, 1, Polarity::Negative)], 4000.0, 100_000).unwrap();
        let v = est_features(&t, &EstKernel::Triangle { width_us: w }, 10).unwrap();
        let base = (1 * 2 + 1) * 10;
        for (j, ts) in sample_times(100_000, 10).into_iter().enumerate() {
            let expect = if ts >= t0 { (1.0 - (ts - t0) as f64 / w).max(0.0) } else { 0.0 };
            assert_eq!(v.values()[base + j], expect);
        }
        assert!(v.values()[..base].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uncached_gradient_is_usage_error() {
        let net = EstNet::random(1);
        assert!(matches!(est_kernel_grad(&net, &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut net = EstNet::random(1);
        let t = SpikeTrain::new(layout(), vec![SpikeEvent::new(500, 0, Polarity::Positive)], 4000.0, 10_000).unwrap();
        let f = net.forward_cached(&t, 5).unwrap();
        let g = est_kernel_grad(&net, &vec![0.0; f.len()]).unwrap();
        assert!(g.flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn triangle_init_approximates_triangle() {
        let net = EstNet::triangle_init(0.25, 3);
        for x in [0.0, 0.1, 0.2, 0.5, 0.9] {
            let expect = (1.0 - x / 0.25f64).max(0.0);
            assert!((net.eval(x) - expect).abs() < 0.1, "x={x}: {}", net.eval(x));
        }
    }
}
