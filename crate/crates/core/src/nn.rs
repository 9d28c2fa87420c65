//! Minimal dense layers with manual backpropagation, shared by the
//! perceptron, recurrent head, autoencoder and EST kernel.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a
                }
            }
        }
    }
}

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = match activation {
            Activation::Identity => (6.0 / (inputs + outputs) as f64).sqrt(),
            _ => (6.0 / inputs as f64).sqrt(),
        };
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Writes pre-activations and activations for one input.
    pub fn forward_into(&self, x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = self.bias[o] + dot(row, x);
            pre[o] = z;
            out[o] = self.activation.apply(z);
        }
    }

    /// Accumulates parameter gradients and, if requested, writes the gradient
    /// with respect to the input.
    pub fn backward(
        &self,
        x: &[f64],
        pre: &[f64],
        grad_out: &[f64],
        grads: &mut DenseGrads,
        grad_in: Option<&mut [f64]>,
    ) {
        let mut gin = grad_in;
        if let Some(g) = gin.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for o in 0..self.outputs {
            let d = grad_out[o] * self.activation.derivative(pre[o]);
            if d == 0.0 {
                continue;
            }
            grads.bias[o] += d;
            let gw = &mut grads.weights[o * self.inputs..(o + 1) * self.inputs];
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += d * xi;
            }
            if let Some(g) = gin.as_deref_mut() {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                for (gi, w) in g.iter_mut().zip(row) {
                    *gi += d * w;
                }
            }
        }
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn step(&mut self, g: &DenseGrads, lr: f64) {
        for (w, d) in self.weights.iter_mut().zip(&g.weights) {
            *w -= lr * d;
        }
        for (b, d) in self.bias.iter_mut().zip(&g.bias) {
            *b -= lr * d;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseGrads {
    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs and pre-activations from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl Mlp {
    /// `sizes` lists every width from input to output.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output width");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::new(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut pre = vec![0.0; l.outputs];
            let mut out = vec![0.0; l.outputs];
            l.forward_into(&cur, &mut pre, &mut out);
            cur = out;
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut pre = vec![0.0; l.outputs];
            let mut out = vec![0.0; l.outputs];
            l.forward_into(&cur, &mut pre, &mut out);
            inputs.push(std::mem::replace(&mut cur, out));
            pres.push(pre);
        }
        Trace {
            inputs,
            pres,
            output: cur,
        }
    }

    /// Accumulates gradients for `grad_out` (dL/d output) and returns dL/d input.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut MlpGrads) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let mut gin = vec![0.0; l.inputs];
            l.backward(&trace.inputs[i], &trace.pres[i], &g, &mut grads.layers[i], Some(&mut gin));
            g = gin;
        }
        g
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(Dense::zero_grads).collect(),
        }
    }

    pub fn step(&mut self, g: &MlpGrads, lr: f64) {
        for (l, gl) in self.layers.iter_mut().zip(&g.layers) {
            l.step(gl, lr);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
}

impl MlpGrads {
    pub fn scale(&mut self, s: f64) {
        self.layers.iter_mut().for_each(|l| l.scale(s));
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(DenseGrads::flat).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Softmax cross-entropy for one sample: returns loss and dL/d logits.
pub fn softmax_xent(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + m - logits[class];
    let mut g: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    g[class] -= 1.0;
    (loss, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, p: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        let mut q = p.to_vec();
        (0..p.len())
            .map(|i| {
                q[i] = p[i] + h;
                let a = f(&q);
                q[i] = p[i] - h;
                let b = f(&q);
                q[i] = p[i];
                (a - b) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 7, 4, 3], Activation::LeakyRelu(0.1), Activation::Identity, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |m: &Mlp| m.forward(&x).iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum::<f64>();
        let tr = net.forward_trace(&x);
        let go: Vec<f64> = tr.output().iter().enumerate().map(|(i, v)| 2.0 * (i as f64 + 1.0) * v).collect();
        let mut g = net.zero_grads();
        net.backward(&tr, &go, &mut g);
        let num = numeric_grad(
            |p| {
                let mut m = net.clone();
                m.set_params(p);
                loss(&m)
            },
            &net.params(),
        );
        for (a, b) in g.flat().iter().zip(&num) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_gradient_sums_to_zero() {
        let (l, g) = softmax_xent(&[1.0, 2.0, 0.5], 1);
        assert!(l > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        assert!(g[1] < 0.0);
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let p = net.params();
        assert_eq!(p.len(), net.param_count());
        net.set_params(&p);
        assert_eq!(net.params(), p);
    }
}
