//! Lower-rate simulations of recorded data: refractory spike dropping for
//! event streams and decimation for analog streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalogSignal, SpikeTrain};

/// Drops, per taxel, every spike arriving less than `tau_us` after the last
/// accepted spike of that taxel. The first spike is always accepted.
///
/// The nominal rate of the result is lowered to `1 / tau` when that is the
/// tighter bound.
pub fn spike_downsample(train: &SpikeTrain, tau_us: u64) -> SpikeTrain {
    if tau_us == 0 {
        return train.clone();
    }
    let mut last: Vec<Option<u64>> = vec![None; train.taxel_count()];
    let events = train
        .events()
        .iter()
        .filter(|e| {
            let slot = &mut last[e.taxel as usize];
            match *slot {
                Some(l) if e.t.0 < l + tau_us => false,
                _ => {
                    *slot = Some(e.t.0);
                    true
                }
            }
        })
        .copied()
        .collect();
    let rate = train.nominal_rate_hz().min(1e6 / tau_us as f64);
    SpikeTrain::from_parts_unchecked(train.layouts().to_vec(), events, rate, train.duration_us())
}

/// Refractory interval that bounds each taxel to `rate_hz`.
pub fn tau_for_rate(rate_hz: f64) -> Result<u64> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::InvalidRate(format!("rate must be positive, got {rate_hz}")));
    }
    Ok((1e6 / rate_hz).round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Antialias {
    On,
    Off,
}

/// Result of [`decimate`] with the integral factor actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct Decimated {
    pub signal: AnalogSignal,
    pub factor: usize,
    /// True when the target did not divide the source rate and the nearest
    /// integral factor was substituted.
    pub rounded: bool,
}

/// Keeps every k-th sample, optionally after a zero-phase low-pass at
/// `0.45 * target_rate_hz`.
pub fn decimate(sig: &AnalogSignal, target_rate_hz: f64, antialias: Antialias) -> Result<Decimated> {
    let src = sig.rate_hz();
    if !(target_rate_hz > 0.0) || target_rate_hz > src * (1.0 + 1e-12) {
        return Err(Error::InvalidRate(format!(
            "target {target_rate_hz} Hz must be positive and at most the source rate {src} Hz"
        )));
    }
    let exact = src / target_rate_hz;
    let factor = exact.round().max(1.0) as usize;
    let rounded = (exact - factor as f64).abs() > 1e-9;
    if factor == 1 {
        return Ok(Decimated {
            signal: sig.clone(),
            factor,
            rounded,
        });
    }
    let out_rate = src / factor as f64;
    let filtered;
    let x = match antialias {
        Antialias::Off => sig.samples(),
        Antialias::On => {
            filtered = lowpass_zero_phase(sig.samples(), 0.45 * out_rate / src);
            &filtered
        }
    };
    let samples = x.iter().step_by(factor).copied().collect();
    Ok(Decimated {
        signal: AnalogSignal::new(samples, out_rate, sig.channel_name())?,
        factor,
        rounded,
    })
}

/// Symmetric Blackman-windowed sinc FIR with cutoff `fc` (cycles/sample),
/// applied centred so it introduces no phase shift.
fn lowpass_zero_phase(x: &[f64], fc: f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    // transition width ~ 5.5 / taps for Blackman; aim for ~0.1 fc
    let half = ((27.5 / fc).ceil() as usize).max(8);
    let taps = 2 * half + 1;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * m).sin() / (std::f64::consts::PI * m)
            };
            let a = 2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64;
            sinc * (0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos())
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);

    let n = x.len() as i64;
    let last = n - 1;
    let at = |i: i64| -> f64 {
        // odd reflection about the end samples keeps slope continuous
        if i < 0 {
            2.0 * x[0] - x[(-i).min(last) as usize]
        } else if i > last {
            2.0 * x[last as usize] - x[(2 * last - i).max(0) as usize]
        } else {
            x[i as usize]
        }
    };
    (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, hk)| hk * at(i + k as i64 - half as i64))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Polarity, SpikeEvent, TaxelLayout};

    fn one_taxel(times: &[u64]) -> SpikeTrain {
        let ev = times
            .iter()
            .map(|&t| SpikeEvent::new(t, 0, Polarity::Positive))
            .collect();
        SpikeTrain::new(vec![TaxelLayout::new(1, 1, "x").unwrap()], ev, 10_000.0, 10_000).unwrap()
    }

    #[test]
    fn greedy_refractory_rule() {
        let t = one_taxel(&[0, 100, 200, 300]);
        let out = spike_downsample(&t, 250);
        let kept: Vec<u64> = out.events().iter().map(|e| e.t.0).collect();
        assert_eq!(kept, vec![0, 300]);
        assert_eq!(spike_downsample(&out, 250), out);
        assert_eq!(spike_downsample(&t, 0), t);
    }

    #[test]
    fn tau_is_reciprocal_rate() {
        assert_eq!(tau_for_rate(1000.0).unwrap(), 1000);
        assert_eq!(tau_for_rate(4000.0).unwrap(), 250);
        assert!(tau_for_rate(0.0).is_err());
    }

    fn ramp(n: usize, rate: f64) -> AnalogSignal {
        AnalogSignal::new((0..n).map(|i| i as f64).collect(), rate, "PAC").unwrap()
    }

    #[test]
    fn stride_without_filter() {
        let d = decimate(&ramp(16, 4000.0), 1000.0, Antialias::Off).unwrap();
        assert_eq!(d.signal.samples(), &[0.0, 4.0, 8.0, 12.0]);
        assert_eq!(d.signal.rate_hz(), 1000.0);
        assert_eq!(d.factor, 4);
        assert!(!d.rounded);
    }

    #[test]
    fn factor_one_is_identity() {
        let s = ramp(10, 4000.0);
        assert_eq!(decimate(&s, 4000.0, Antialias::On).unwrap().signal, s);
    }

    #[test]
    fn non_dividing_target_rounds_factor() {
        let d = decimate(&ramp(30, 4000.0), 1300.0, Antialias::Off).unwrap();
        assert_eq!(d.factor, 3);
        assert!(d.rounded);
    }

    #[test]
    fn upsampling_rejected() {
        assert!(matches!(
            decimate(&ramp(4, 1000.0), 2000.0, Antialias::On),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn passband_tone_survives_within_one_percent() {
        let (src, target) = (4000.0, 500.0);
        let f = 60.0;
        let n = 8000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / src).sin())
            .collect();
        let sig = AnalogSignal::new(x, src, "PAC").unwrap();
        let d = decimate(&sig, target, Antialias::On).unwrap();
        let y = d.signal.samples();
        for (j, &v) in y.iter().enumerate() {
            let expect = (2.0 * std::f64::consts::PI * f * j as f64 / target).sin();
            assert!((v - expect).abs() < 0.01, "sample {j}: {v} vs {expect}");
        }
    }

    #[test]
    fn stopband_tone_is_suppressed() {
        let (src, target) = (4000.0, 500.0);
        // 400 Hz would alias to 100 Hz at 500 Hz
        let x: Vec<f64> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * 400.0 * i as f64 / src).sin())
            .collect();
        let sig = AnalogSignal::new(x, src, "PAC").unwrap();
        let d = decimate(&sig, target, Antialias::On).unwrap();
        let y = &d.signal.samples()[100..900];
        assert!(y.iter().all(|v| v.abs() < 0.01));
    }
}
