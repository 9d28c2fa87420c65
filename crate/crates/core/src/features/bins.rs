use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::error::{Error, Result};
use crate::model::{Polarity, SpikeTrain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinMode {
    /// All spikes counted together.
    Unsigned,
    /// Positive minus negative count.
    Signed,
    /// Two channels per taxel: positive, then negative.
    SplitPolarity,
}

impl BinMode {
    pub fn channels(self) -> usize {
        match self {
            BinMode::SplitPolarity => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinMode::Unsigned => "unsigned",
            BinMode::Signed => "signed",
            BinMode::SplitPolarity => "split",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unsigned" => Ok(BinMode::Unsigned),
            "signed" => Ok(BinMode::Signed),
            "split" | "split-polarity" => Ok(BinMode::SplitPolarity),
            o => Err(Error::InvalidParameter(format!("unknown bin mode `{o}`"))),
        }
    }
}

/// Per-taxel spike counts in consecutive bins of `bin_ms`.
///
/// The trailing partial bin is dropped. Step dimension is
/// `taxels * mode.channels()`, taxel-major.
pub fn bin_spike_counts(train: &SpikeTrain, bin_ms: f64, mode: BinMode) -> Result<FeatureSequence> {
    if !(bin_ms > 0.0 && bin_ms.is_finite()) {
        return Err(Error::InvalidParameter(format!("bin width must be positive, got {bin_ms}")));
    }
    let bin_us = (bin_ms * 1e3).round() as u64;
    if bin_us == 0 {
        return Err(Error::InvalidParameter("bin width below 1 us".into()));
    }
    let steps = (train.duration_us() / bin_us) as usize;
    let ch = mode.channels();
    let dim = train.taxel_count() * ch;
    let mut out = vec![vec![0.0; dim]; steps];
    for e in train.events() {
        let b = (e.t.0 / bin_us) as usize;
        if b >= steps {
            continue;
        }
        let taxel = e.taxel as usize;
        match mode {
            BinMode::Unsigned => out[b][taxel] += 1.0,
            BinMode::Signed => out[b][taxel] += f64::from(e.polarity.sign()),
            BinMode::SplitPolarity => {
                let c = match e.polarity {
                    Polarity::Positive => 0,
                    Polarity::Negative => 1,
                };
                out[b][taxel * 2 + c] += 1.0;
            }
        }
    }
    FeatureSequence::new(out, bin_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SpikeEvent, TaxelLayout};
    use proptest::prelude::*;

    fn two_fingers() -> Vec<TaxelLayout> {
        vec![TaxelLayout::nuskin("left"), TaxelLayout::nuskin("right")]
    }

    #[test]
    fn empty_train_gives_zero_steps() {
        let t = SpikeTrain::empty(two_fingers(), 4000.0, 300_000).unwrap();
        let s = bin_spike_counts(&t, 5.0, BinMode::Unsigned).unwrap();
        assert_eq!(s.len(), 60);
        assert_eq!(s.dim(), 80);
        assert!(s.steps().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn counts_land_in_first_bin() {
        let ev = (1..=3)
            .map(|ms| SpikeEvent::new(ms * 1000, 0, Polarity::Positive))
            .collect();
        let t = SpikeTrain::new(two_fingers(), ev, 4000.0, 300_000).unwrap();
        let s = bin_spike_counts(&t, 5.0, BinMode::Unsigned).unwrap();
        assert_eq!(s.steps()[0][0], 3.0);
        assert_eq!(s.steps()[1][0], 0.0);
    }

    #[test]
    fn partial_bin_dropped() {
        let ev = vec![SpikeEvent::new(11_000, 0, Polarity::Negative)];
        let t = SpikeTrain::new(vec![TaxelLayout::new(1, 1, "x").unwrap()], ev, 4000.0, 12_000).unwrap();
        let s = bin_spike_counts(&t, 5.0, BinMode::SplitPolarity).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert!(s.steps().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn non_positive_bin_rejected() {
        let t = SpikeTrain::empty(two_fingers(), 4000.0, 1000).unwrap();
        assert!(bin_spike_counts(&t, 0.0, BinMode::Unsigned).is_err());
    }

    proptest! {
        #[test]
        fn totals_match_event_counts(raw in prop::collection::vec((0u64..1200, 0u32..4, any::<bool>()), 0..200)) {
            let mut ev: Vec<SpikeEvent> = raw.into_iter().map(|(slot, tx, p)| {
                SpikeEvent::new(slot * 250, tx, if p { Polarity::Positive } else { Polarity::Negative })
            }).collect();
            ev.sort_by_key(|e| (e.t, e.taxel));
            ev.dedup_by_key(|e| (e.t, e.taxel));
            let t = SpikeTrain::new(vec![TaxelLayout::new(2, 2, "x").unwrap()], ev.clone(), 4000.0, 300_000).unwrap();
            let sum = |m| bin_spike_counts(&t, 5.0, m).unwrap().steps().iter().flatten().sum::<f64>();
            let pos = ev.iter().filter(|e| e.polarity == Polarity::Positive).count() as f64;
            let neg = ev.len() as f64 - pos;
            prop_assert_eq!(sum(BinMode::Unsigned), ev.len() as f64);
            prop_assert_eq!(sum(BinMode::Signed), pos - neg);
            prop_assert_eq!(sum(BinMode::SplitPolarity), ev.len() as f64);
        }
    }
}
