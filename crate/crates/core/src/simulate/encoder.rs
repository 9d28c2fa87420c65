//! Send-on-delta spike encoding of per-taxel pressure signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{min_spacing_us, AnalogSignal, Polarity, SpikeEvent, SpikeTrain, TaxelLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEncoderSpec {
    /// Pressure step per spike.
    pub delta_threshold: f64,
    /// Per-taxel rate bound.
    pub rate_limit_hz: f64,
}

impl Default for SpikeEncoderSpec {
    fn default() -> Self {
        SpikeEncoderSpec {
            delta_threshold: 0.1,
            rate_limit_hz: crate::model::NUSKIN_RATE_HZ,
        }
    }
}

impl SpikeEncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_threshold > 0.0 && self.delta_threshold.is_finite()) {
            return Err(Error::InvalidParameter("delta_threshold must be positive".into()));
        }
        if !(self.rate_limit_hz > 0.0 && self.rate_limit_hz.is_finite()) {
            return Err(Error::InvalidParameter("rate_limit_hz must be positive".into()));
        }
        Ok(())
    }
}

/// Encodes one signal per taxel into a merged, time-ordered spike train.
///
/// Each taxel keeps a reference level starting at its first sample. A sample
/// at least `delta` above the level emits `+1` and raises the level by
/// `delta`; at least `delta` below emits `-1` and lowers it. At most one
/// spike is emitted per sample and per-taxel spacing never drops below the
/// rate limit, so the level lags fast transients instead of bursting.
pub fn encode_spikes(
    signals: &[AnalogSignal],
    enc: &SpikeEncoderSpec,
    layouts: Vec<TaxelLayout>,
) -> Result<SpikeTrain> {
    enc.validate()?;
    let taxels: usize = layouts.iter().map(TaxelLayout::taxel_count).sum();
    if signals.len() != taxels {
        return Err(Error::InvalidInput(format!(
            "{} signals for a {taxels}-taxel layout",
            signals.len()
        )));
    }
    let first = signals
        .first()
        .ok_or_else(|| Error::InvalidInput("no signals to encode".into()))?;
    let (rate, len) = (first.rate_hz(), first.len());
    if signals.iter().any(|s| s.rate_hz() != rate || s.len() != len) {
        return Err(Error::InvalidInput("signals must share rate and length".into()));
    }
    let gap = min_spacing_us(enc.rate_limit_hz);
    let mut events = Vec::new();
    for (taxel, sig) in signals.iter().enumerate() {
        encode_one(sig, enc.delta_threshold, gap, taxel as u32, &mut events);
    }
    events.sort_by_key(|e| (e.t, e.taxel));
    let duration = (len as f64 * 1e6 / rate).round() as u64;
    SpikeTrain::new(layouts, events, enc.rate_limit_hz, duration.max(1))
}

fn encode_one(sig: &AnalogSignal, delta: f64, gap: u64, taxel: u32, out: &mut Vec<SpikeEvent>) {
    let x = sig.samples();
    let Some(&x0) = x.first() else { return };
    let mut steps: i64 = 0;
    let mut last: Option<u64> = None;
    for (i, &v) in x.iter().enumerate() {
        let t = (i as f64 * 1e6 / sig.rate_hz()).round() as u64;
        if last.is_some_and(|l| t - l < gap) {
            continue;
        }
        let d = v - (x0 + steps as f64 * delta);
        let polarity = if d >= delta {
            steps += 1;
            Polarity::Positive
        } else if d <= -delta {
            steps -= 1;
            Polarity::Negative
        } else {
            continue;
        };
        out.push(SpikeEvent::new(t, taxel, polarity));
        last = Some(t);
    }
}

/// Level implied by cumulative spikes of one taxel at each sample.
pub fn reconstruct_levels(train: &SpikeTrain, taxel: u32, x0: f64, delta: f64, sig: &AnalogSignal) -> Vec<f64> {
    let mut ev = train.taxel_events(taxel).peekable();
    let mut steps = 0i64;
    (0..sig.len())
        .map(|i| {
            let t = (i as f64 * 1e6 / sig.rate_hz()).round() as u64;
            while let Some(e) = ev.peek() {
                if e.t.0 > t {
                    break;
                }
                steps += e.polarity.sign() as i64;
                ev.next();
            }
            x0 + steps as f64 * delta
        })
        .collect()
}
