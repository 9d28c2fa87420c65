use std::cell::RefCell;

use num_complex::Complex;
use rustfft::FftPlanner;

use super::{FeatureSequence, FeatureVector};
use crate::error::{Error, Result};
use crate::model::AnalogSignal;

pub const DEFAULT_KEEP_COEFFS: usize = 64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Full complex transform of `x` zero-padded to the next power of two.
pub fn padded_spectrum(x: &[f64]) -> Vec<Complex<f64>> {
    let n = x.len().max(1).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    buf
}

/// Number of one-sided bins for a series of `len` samples.
pub fn one_sided_len(len: usize) -> usize {
    len.max(1).next_power_of_two() / 2 + 1
}

/// One-sided magnitude spectrum, DC first.
pub fn one_sided_magnitudes(x: &[f64]) -> Vec<f64> {
    let spec = padded_spectrum(x);
    let half = spec.len() / 2 + 1;
    spec[..half.min(spec.len())].iter().map(|c| c.norm()).collect()
}

#[derive(Debug, Clone, Copy)]
pub enum FftInput<'a> {
    Sequence(&'a FeatureSequence),
    Analog(&'a AnalogSignal),
}

/// Per-channel magnitude spectra truncated to `keep_coeffs` and concatenated.
///
/// With `pooled`, sequence channels are summed into one series first.
pub fn fft_features(input: FftInput<'_>, keep_coeffs: usize, pooled: bool) -> Result<FeatureVector> {
    let channels: Vec<Vec<f64>> = match input {
        FftInput::Analog(sig) => vec![sig.samples().to_vec()],
        FftInput::Sequence(seq) if pooled => vec![seq.steps().iter().map(|s| s.iter().sum()).collect()],
        FftInput::Sequence(seq) => (0..seq.dim()).map(|c| seq.channel(c)).collect(),
    };
    let len = channels.first().map_or(0, Vec::len);
    if len < 2 {
        return Err(Error::InvalidInput(format!("fft needs at least 2 samples per channel, got {len}")));
    }
    let avail = one_sided_len(len);
    if keep_coeffs == 0 || keep_coeffs > avail {
        return Err(Error::InvalidParameter(format!(
            "keep_coeffs {keep_coeffs} outside 1..={avail} for {len}-sample channels"
        )));
    }
    let mut values = Vec::with_capacity(channels.len() * keep_coeffs);
    for ch in &channels {
        values.extend_from_slice(&one_sided_magnitudes(ch)[..keep_coeffs]);
    }
    FeatureVector::new(values, format!("fft(keep={keep_coeffs},pooled={pooled})"))
}
