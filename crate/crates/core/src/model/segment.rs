use std::collections::BTreeSet;

use super::{AnalogSignal, Payload, Recording, SpikeEvent, SpikeTrain, TaxelLayout, Timestamp};
use crate::error::{Error, Result};

/// Window kept before first contact.
pub const PRE_CONTACT_US: u64 = 50_000;
/// Window kept after first contact.
pub const POST_CONTACT_US: u64 = 250_000;

const BASELINE_US: u64 = 20_000;
const DEFAULT_SPIKES_PER_MS: f64 = 2.0;
const DEFAULT_SIGMA_MULTIPLE: f64 = 5.0;

/// Extracts `[contact - 50 ms, contact + 250 ms)` re-based to zero.
///
/// Parts of the window outside the recording are padded (zeros for analog,
/// no events for spikes) and flagged with `padded=true`; windows without
/// events are flagged `empty=true`.
pub fn segment_contact_window(rec: &Recording, contact_t: Timestamp) -> Result<Recording> {
    let start = contact_t.0 as i64 - PRE_CONTACT_US as i64;
    let end = contact_t.0 as i64 + POST_CONTACT_US as i64;
    cut(rec, start, end, true)
}

/// Restricts a recording to `[start_s, end_s)` and re-bases it to zero.
pub fn segment_fixed_window(rec: &Recording, start_s: f64, end_s: f64) -> Result<Recording> {
    if !(start_s.is_finite() && end_s.is_finite() && start_s < end_s) {
        return Err(Error::InvalidWindow(format!(
            "start {start_s} s must precede end {end_s} s"
        )));
    }
    let start = (start_s * 1e6).round() as i64;
    let end = (end_s * 1e6).round() as i64;
    cut(rec, start, end, false)
}

fn cut(rec: &Recording, start: i64, end: i64, pad: bool) -> Result<Recording> {
    let dur = rec.payload.duration_us() as i64;
    if end <= 0 || start >= dur {
        return Err(Error::InvalidWindow(format!(
            "window [{start}, {end}) us does not intersect recording [0, {dur}) us"
        )));
    }
    let (lo, hi) = if pad { (start, end) } else { (start.max(0), end.min(dur)) };
    let padded = lo < 0 || hi > dur;
    let payload = match &rec.payload {
        Payload::Spikes(train) => Payload::Spikes(cut_spikes(train, lo, hi)),
        Payload::Analog(sig) => Payload::Analog(cut_analog(sig, lo, hi)?),
    };
    let mut out = Recording {
        payload,
        label: rec.label,
        meta: rec.meta.clone(),
    };
    if padded {
        out.meta.insert("padded".into(), "true".into());
    }
    if let Payload::Spikes(t) = &out.payload {
        if t.is_empty() {
            out.meta.insert("empty".into(), "true".into());
        }
    }
    Ok(out)
}

fn cut_spikes(train: &SpikeTrain, lo: i64, hi: i64) -> SpikeTrain {
    let events = train
        .events()
        .iter()
        .filter(|e| (e.t.0 as i64) >= lo && (e.t.0 as i64) < hi)
        .map(|e| SpikeEvent {
            t: Timestamp((e.t.0 as i64 - lo) as u64),
            ..*e
        })
        .collect();
    SpikeTrain::from_parts_unchecked(
        train.layouts().to_vec(),
        events,
        train.nominal_rate_hz(),
        (hi - lo) as u64,
    )
}

fn cut_analog(sig: &AnalogSignal, lo: i64, hi: i64) -> Result<AnalogSignal> {
    let rate = sig.rate_hz();
    let first = (lo as f64 * rate / 1e6).round() as i64;
    let count = ((hi - lo) as f64 * rate / 1e6).round() as i64;
    let n = sig.len() as i64;
    let samples = (first..first + count)
        .map(|i| {
            if (0..n).contains(&i) {
                sig.samples()[i as usize]
            } else {
                0.0
            }
        })
        .collect();
    AnalogSignal::new(samples, rate, sig.channel_name())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactThreshold {
    /// Analog: 5x the standard deviation of the first 20 ms.
    /// Spikes: 2 events within one 1 ms bin.
    Auto,
    /// Deviation in sensor units (analog) or events per 1 ms bin (spikes).
    Level(f64),
}

/// Earliest contact time, or `None` if the threshold is never reached.
pub fn detect_first_contact(rec: &Recording, threshold: ContactThreshold) -> Result<Option<Timestamp>> {
    if let ContactThreshold::Level(v) = threshold {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "contact threshold must be positive, got {v}"
            )));
        }
    }
    match &rec.payload {
        Payload::Analog(sig) => Ok(detect_analog(sig, threshold)),
        Payload::Spikes(train) => {
            let level = match threshold {
                ContactThreshold::Auto => DEFAULT_SPIKES_PER_MS,
                ContactThreshold::Level(v) => v,
            };
            Ok(detect_spikes(train, level))
        }
    }
}

fn detect_analog(sig: &AnalogSignal, threshold: ContactThreshold) -> Option<Timestamp> {
    let x = sig.samples();
    if x.is_empty() {
        return None;
    }
    let nb = ((BASELINE_US as f64 * sig.rate_hz() / 1e6).round() as usize).clamp(1, x.len());
    let base = &x[..nb];
    let mean = base.iter().sum::<f64>() / nb as f64;
    let level = match threshold {
        ContactThreshold::Level(v) => v,
        ContactThreshold::Auto => {
            let var = base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nb as f64;
            DEFAULT_SIGMA_MULTIPLE * var.sqrt()
        }
    };
    x.iter()
        .position(|v| (v - mean).abs() > level)
        .map(|i| Timestamp((i as f64 * 1e6 / sig.rate_hz()).round() as u64))
}

fn detect_spikes(train: &SpikeTrain, level: f64) -> Option<Timestamp> {
    let ev = train.events();
    let mut i = 0;
    while i < ev.len() {
        let bin = ev[i].t.0 / 1000;
        let mut j = i;
        while j < ev.len() && ev[j].t.0 / 1000 == bin {
            j += 1;
        }
        if (j - i) as f64 >= level {
            return Some(ev[i].t);
        }
        i = j;
    }
    None
}

/// Keeps only the taxels in `keep`, re-indexing them densely in ascending
/// order.
///
/// Selecting exactly one finger of a multi-finger train yields that finger's
/// layout; other selections yield a `1 x n` layout named `selection`.
pub fn select_taxels(train: &SpikeTrain, keep: &BTreeSet<u32>) -> Result<SpikeTrain> {
    if keep.is_empty() {
        return Err(Error::InvalidSelection("keep set is empty".into()));
    }
    let n = train.taxel_count();
    if let Some(&bad) = keep.iter().find(|&&k| k as usize >= n) {
        return Err(Error::InvalidSelection(format!(
            "taxel {bad} out of range for {n}-taxel train"
        )));
    }
    let mut remap = vec![u32::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        remap[old as usize] = new as u32;
    }
    let events = train
        .events()
        .iter()
        .filter_map(|e| {
            let m = remap[e.taxel as usize];
            (m != u32::MAX).then_some(SpikeEvent { taxel: m, ..*e })
        })
        .collect();
    let layouts = selected_layouts(train.layouts(), keep);
    Ok(SpikeTrain::from_parts_unchecked(
        layouts,
        events,
        train.nominal_rate_hz(),
        train.duration_us(),
    ))
}

fn selected_layouts(layouts: &[TaxelLayout], keep: &BTreeSet<u32>) -> Vec<TaxelLayout> {
    let total: usize = layouts.iter().map(TaxelLayout::taxel_count).sum();
    if keep.len() == total {
        return layouts.to_vec();
    }
    let mut offset = 0u32;
    for l in layouts {
        let count = l.taxel_count() as u32;
        let range = offset..offset + count;
        if keep.len() == count as usize && keep.iter().all(|k| range.contains(k)) {
            return vec![l.clone()];
        }
        offset += count;
    }
    vec![TaxelLayout {
        rows: 1,
        cols: keep.len(),
        finger_id: "selection".into(),
    }]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, Polarity};

    fn analog_rec(samples: Vec<f64>, rate: f64) -> Recording {
        Recording::new(
            Payload::Analog(AnalogSignal::new(samples, rate, "PAC").unwrap()),
            Label::Regression { position_cm: 3.0 },
        )
    }

    fn spike_rec(events: Vec<SpikeEvent>, taxels: usize, dur: u64) -> Recording {
        let layout = vec![TaxelLayout::new(1, taxels, "f").unwrap()];
        Recording::new(
            Payload::Spikes(SpikeTrain::new(layout, events, 4000.0, dur).unwrap()),
            Label::Class { id: 1, class_count: 2 },
        )
    }

    #[test]
    fn analog_contact_window_bounds() {
        let samples: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let rec = analog_rec(samples, 1000.0);
        let seg = segment_contact_window(&rec, Timestamp::from_ms(100.0)).unwrap();
        let a = seg.payload.as_analog().unwrap();
        assert_eq!(a.len(), 300);
        assert_eq!(a.samples()[0], 50.0);
        assert_eq!(a.samples()[299], 349.0);
        assert_eq!(seg.label, rec.label);
        assert!(!seg.meta.contains_key("padded"));
    }

    #[test]
    fn analog_window_pads_before_start() {
        let rec = analog_rec(vec![1.0; 1000], 1000.0);
        let seg = segment_contact_window(&rec, Timestamp::from_ms(10.0)).unwrap();
        let a = seg.payload.as_analog().unwrap();
        assert_eq!(a.len(), 300);
        assert!(a.samples()[..40].iter().all(|&v| v == 0.0));
        assert_eq!(a.samples()[40], 1.0);
        assert_eq!(seg.meta.get("padded").map(String::as_str), Some("true"));
    }

    #[test]
    fn empty_window_is_flagged() {
        let rec = spike_rec(vec![SpikeEvent::new(900_000, 0, Polarity::Positive)], 2, 1_000_000);
        let seg = segment_contact_window(&rec, Timestamp::from_ms(100.0)).unwrap();
        assert!(seg.payload.as_spikes().unwrap().is_empty());
        assert_eq!(seg.meta.get("empty").map(String::as_str), Some("true"));
    }

    #[test]
    fn window_outside_recording_is_error() {
        let rec = analog_rec(vec![0.0; 100], 1000.0);
        assert!(matches!(
            segment_contact_window(&rec, Timestamp::from_ms(400.0)),
            Err(Error::InvalidWindow(_))
        ));
        assert!(matches!(
            segment_fixed_window(&rec, 0.2, 0.3),
            Err(Error::InvalidWindow(_))
        ));
        assert!(segment_fixed_window(&rec, 0.3, 0.2).is_err());
    }

    #[test]
    fn fixed_window_durations() {
        let rec = analog_rec(vec![0.5; 10_000], 1000.0);
        let seg = segment_fixed_window(&rec, 2.0, 8.0).unwrap();
        assert_eq!(seg.payload.as_analog().unwrap().len(), 6000);
        assert_eq!(seg.payload.duration_us(), 6_000_000);
        let whole = segment_fixed_window(&rec, 0.0, 10.0).unwrap();
        assert_eq!(whole.payload, rec.payload);
    }

    #[test]
    fn contact_segmentation_is_idempotent() {
        let ev: Vec<_> = (0..40u64)
            .map(|i| SpikeEvent::new(i * 10_000, (i % 3) as u32, Polarity::Positive))
            .collect();
        let rec = spike_rec(ev, 3, 400_000);
        let once = segment_contact_window(&rec, Timestamp::from_ms(120.0)).unwrap();
        let twice = segment_contact_window(&once, Timestamp::from_ms(50.0)).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn all_zero_signal_has_no_contact() {
        let rec = analog_rec(vec![0.0; 500], 1000.0);
        assert_eq!(detect_first_contact(&rec, ContactThreshold::Auto).unwrap(), None);
        assert_eq!(
            detect_first_contact(&rec, ContactThreshold::Level(0.1)).unwrap(),
            None
        );
    }

    #[test]
    fn single_spike_detected_at_threshold_one() {
        let rec = spike_rec(vec![SpikeEvent::new(7_000, 0, Polarity::Negative)], 1, 20_000);
        assert_eq!(
            detect_first_contact(&rec, ContactThreshold::Level(1.0)).unwrap(),
            Some(Timestamp(7_000))
        );
        assert_eq!(detect_first_contact(&rec, ContactThreshold::Auto).unwrap(), None);
    }

    #[test]
    fn empty_payload_has_no_contact() {
        let rec = spike_rec(vec![], 1, 20_000);
        assert_eq!(detect_first_contact(&rec, ContactThreshold::Auto).unwrap(), None);
        let rec = analog_rec(vec![], 1000.0);
        assert_eq!(detect_first_contact(&rec, ContactThreshold::Auto).unwrap(), None);
    }

    #[test]
    fn non_positive_threshold_rejected() {
        let rec = analog_rec(vec![0.0; 5], 1000.0);
        assert!(detect_first_contact(&rec, ContactThreshold::Level(0.0)).is_err());
    }

    #[test]
    fn select_single_taxel_matches_filter() {
        let ev = vec![
            SpikeEvent::new(0, 0, Polarity::Positive),
            SpikeEvent::new(0, 1, Polarity::Negative),
            SpikeEvent::new(300, 0, Polarity::Negative),
            SpikeEvent::new(600, 2, Polarity::Positive),
        ];
        let rec = spike_rec(ev.clone(), 3, 1000);
        let train = rec.payload.as_spikes().unwrap();
        let out = select_taxels(train, &BTreeSet::from([0])).unwrap();
        let oracle: Vec<_> = ev.iter().filter(|e| e.taxel == 0).copied().collect();
        assert_eq!(out.events(), oracle.as_slice());
        assert_eq!(out.taxel_count(), 1);

        let all = select_taxels(train, &(0..3).collect()).unwrap();
        assert_eq!(&all, train);
    }

    #[test]
    fn select_one_finger_of_two() {
        let layouts = vec![TaxelLayout::nuskin("left"), TaxelLayout::nuskin("right")];
        let ev = vec![
            SpikeEvent::new(0, 3, Polarity::Positive),
            SpikeEvent::new(0, 45, Polarity::Positive),
        ];
        let train = SpikeTrain::new(layouts, ev, 4000.0, 1000).unwrap();
        let left = select_taxels(&train, &(0..40).collect()).unwrap();
        assert_eq!(left.layouts(), &[TaxelLayout::nuskin("left")]);
        assert_eq!(left.events().len(), 1);
        let right = select_taxels(&train, &(40..80).collect()).unwrap();
        assert_eq!(right.layouts()[0].finger_id, "right");
        assert_eq!(right.events()[0].taxel, 5);
    }

    #[test]
    fn select_rejects_bad_sets() {
        let rec = spike_rec(vec![], 3, 1000);
        let train = rec.payload.as_spikes().unwrap();
        assert!(matches!(
            select_taxels(train, &BTreeSet::new()),
            Err(Error::InvalidSelection(_))
        ));
        assert!(select_taxels(train, &BTreeSet::from([3])).is_err());
    }
}
