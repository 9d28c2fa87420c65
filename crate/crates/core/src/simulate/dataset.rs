//! Labeled dataset generators: physics-based rod taps and class-conditioned
//! spike surrogates for the classification tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beam::{BeamSpec, TapStimulus};
use super::encoder::{encode_spikes, SpikeEncoderSpec};
use super::pickup::{synthesize_response, GraspPickup, REFERENCE_IMPULSE_NS};
use crate::error::{Error, Result};
use crate::model::{
    detect_first_contact, segment_contact_window, AnalogSignal, ContactThreshold, Dataset, Label,
    Payload, Polarity, Provenance, Recording, SpikeEvent, SpikeTrain, TaskId, TaxelLayout,
    Timestamp, NUSKIN_RATE_HZ,
};

/// Distribution of tap positions (m from the free end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PositionSampler {
    Uniform { min_m: f64, max_m: f64 },
    /// Cycles through the listed positions.
    Grid(Vec<f64>),
}

impl PositionSampler {
    fn validate(&self, length_m: f64) -> Result<()> {
        let inside = |p: f64| (0.0..=length_m).contains(&p);
        match self {
            PositionSampler::Uniform { min_m, max_m } => {
                if !(min_m < max_m) {
                    return Err(Error::InvalidSampler(format!(
                        "uniform sampler [{min_m}, {max_m}] has zero support"
                    )));
                }
                if !inside(*min_m) || !inside(*max_m) {
                    return Err(Error::InvalidSampler("sampler range leaves the rod".into()));
                }
            }
            PositionSampler::Grid(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidSampler("grid sampler has no points".into()));
                }
                if points.iter().any(|&p| !inside(p)) {
                    return Err(Error::InvalidSampler("grid point outside the rod".into()));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, index: usize, rng: &mut R) -> f64 {
        match self {
            PositionSampler::Uniform { min_m, max_m } => rng.random_range(*min_m..=*max_m),
            PositionSampler::Grid(points) => points[index % points.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalVariant {
    Spikes,
    Analog,
}

/// Everything needed to generate a tap-localization dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapDatasetConfig {
    pub beam: BeamSpec,
    pub pickup: GraspPickup,
    pub encoder: SpikeEncoderSpec,
    pub variant: SignalVariant,
    pub n_taps: usize,
    pub sampler: PositionSampler,
    pub seed: u64,
    pub rate_hz: f64,
    pub impulse_ns: f64,
    /// Relative spread of tap strength: impulse drawn from
    /// `impulse_ns * [1 - jitter, 1 + jitter]`.
    pub impulse_jitter: f64,
}

impl TapDatasetConfig {
    /// Acrylic rod of `length_cm` with a two-finger event skin (spike
    /// variant) or a single pressure channel (analog variant).
    pub fn rod(length_cm: f64, variant: SignalVariant, n_taps: usize, seed: u64) -> Result<Self> {
        let rate = NUSKIN_RATE_HZ;
        let beam = BeamSpec::acrylic_rod(length_cm / 100.0, rate)?;
        let grasp = 0.01;
        let pickup = match variant {
            SignalVariant::Spikes => GraspPickup::nuskin(&beam, 2, grasp, seed ^ 0x5eed)?,
            SignalVariant::Analog => GraspPickup::hydrophone(&beam, grasp)?,
        };
        Ok(TapDatasetConfig {
            sampler: PositionSampler::Uniform {
                min_m: 0.0,
                max_m: beam.length_m,
            },
            beam,
            pickup,
            encoder: SpikeEncoderSpec::default(),
            variant,
            n_taps,
            seed,
            rate_hz: rate,
            impulse_ns: REFERENCE_IMPULSE_NS,
            impulse_jitter: 0.3,
        })
    }
}

const RECORD_S: f64 = 0.4;
const ONSET_MIN_S: f64 = 0.1;
const ONSET_SPREAD_S: f64 = 0.02;

/// Generates `n_taps` labeled, contact-segmented recordings.
///
/// Tap `i` draws from its own ChaCha stream, so output is identical for a
/// fixed seed regardless of scheduling.
pub fn generate_tap_dataset(cfg: &TapDatasetConfig) -> Result<Dataset> {
    if cfg.n_taps == 0 {
        return Err(Error::InvalidParameter("n_taps must be at least 1".into()));
    }
    cfg.sampler.validate(cfg.beam.length_m)?;
    cfg.encoder.validate()?;
    cfg.pickup.validate(&cfg.beam)?;
    if !(0.0..1.0).contains(&cfg.impulse_jitter) {
        return Err(Error::InvalidParameter("impulse_jitter must lie in [0, 1)".into()));
    }
    let recordings = (0..cfg.n_taps)
        .into_par_iter()
        .map(|i| generate_tap(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(recordings, TaskId::TapLocalization, Provenance::Synthetic)
}

fn tap_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn generate_tap(cfg: &TapDatasetConfig, index: usize) -> Result<Recording> {
    let mut rng = tap_rng(cfg.seed, index);
    let position_m = cfg.sampler.sample(index, &mut rng);
    let strength = 1.0 + cfg.impulse_jitter * (2.0 * rng.random::<f64>() - 1.0);
    let onset_s = ONSET_MIN_S + ONSET_SPREAD_S * rng.random::<f64>();
    let tap = TapStimulus {
        position_m,
        impulse_ns: cfg.impulse_ns * strength,
        onset_s,
    };
    let signals = synthesize_response(&cfg.beam, &tap, &cfg.pickup, cfg.rate_hz, RECORD_S, &mut rng)?;
    let payload = match cfg.variant {
        SignalVariant::Spikes => Payload::Spikes(encode_spikes(
            &signals,
            &cfg.encoder,
            cfg.pickup.layouts.clone(),
        )?),
        SignalVariant::Analog => {
            let s = &signals[0];
            Payload::Analog(AnalogSignal::new(s.samples().to_vec(), s.rate_hz(), "PAC")?)
        }
    };
    let length_cm = cfg.beam.length_m * 100.0;
    let label = Label::regression((position_m * 100.0).min(length_cm), length_cm)?;
    let raw = Recording::new(payload, label)
        .with_meta("tool_length_cm", format!("{length_cm}"))
        .with_meta("trial", index.to_string())
        .with_meta("seed", cfg.seed.to_string());
    let (contact, how) = match detect_first_contact(&raw, ContactThreshold::Auto)? {
        Some(t) => (t, "detected"),
        None => (Timestamp((onset_s * 1e6).round() as u64), "onset"),
    };
    Ok(segment_contact_window(&raw, contact)?.with_meta("contact", how))
}

/// Class-conditioned synthetic spike statistics standing in for the food
/// and grasp tasks.
///
/// Every class modulates per-taxel firing rates with its own pair of
/// oscillation frequencies; recordings vary in phase, modulation depth,
/// base rate and polarity balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub task: TaskId,
    pub classes: usize,
    pub per_class: usize,
    pub fingers: usize,
    pub window_s: f64,
    pub base_rate_hz: f64,
    pub modulation: f64,
    pub seed: u64,
}

impl SurrogateConfig {
    /// 7 classes x 50 recordings over a 6 s window.
    pub fn food(seed: u64) -> Self {
        SurrogateConfig {
            task: TaskId::FoodId,
            classes: 7,
            per_class: 50,
            fingers: 2,
            window_s: 6.0,
            base_rate_hz: 20.0,
            modulation: 0.6,
            seed,
        }
    }

    /// 2 classes x 50 recordings over a 300 ms window.
    pub fn grasp(seed: u64) -> Self {
        SurrogateConfig {
            task: TaskId::GraspStability,
            classes: 2,
            per_class: 50,
            fingers: 2,
            window_s: 0.3,
            base_rate_hz: 200.0,
            modulation: 0.6,
            seed,
        }
    }

    /// Oscillation frequencies (cycles per window) of class `c`.
    pub fn class_cycles(&self, c: usize) -> [f64; 2] {
        let primary = 3.0 + 4.0 * c as f64;
        [primary, primary * 1.5 + 2.0]
    }
}

pub fn generate_surrogate_dataset(cfg: &SurrogateConfig) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.per_class == 0 {
        return Err(Error::InvalidParameter(
            "surrogate needs at least two classes and one recording per class".into(),
        ));
    }
    if !(cfg.window_s > 0.0 && cfg.base_rate_hz > 0.0 && (0.0..=1.0).contains(&cfg.modulation)) {
        return Err(Error::InvalidParameter("invalid surrogate rates".into()));
    }
    let n = cfg.classes * cfg.per_class;
    let recordings = (0..n)
        .into_par_iter()
        .map(|i| surrogate_recording(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(recordings, cfg.task, Provenance::SyntheticSurrogate)
}

fn surrogate_recording(cfg: &SurrogateConfig, index: usize) -> Result<Recording> {
    let class = index % cfg.classes;
    let mut rng = tap_rng(cfg.seed, index);
    let layouts: Vec<TaxelLayout> = ["left", "right"]
        .iter()
        .take(cfg.fingers)
        .map(|f| TaxelLayout::nuskin(*f))
        .collect();
    let taxels: usize = layouts.iter().map(TaxelLayout::taxel_count).sum();
    let slot_us = crate::model::min_spacing_us(NUSKIN_RATE_HZ);
    let duration_us = (cfg.window_s * 1e6).round() as u64;
    let slots = duration_us / slot_us;
    let cycles = cfg.class_cycles(class);
    let phases = [
        rng.random::<f64>() * std::f64::consts::TAU,
        rng.random::<f64>() * std::f64::consts::TAU,
    ];
    let depth = cfg.modulation * (0.7 + 0.6 * rng.random::<f64>());
    let base = cfg.base_rate_hz * (0.8 + 0.4 * rng.random::<f64>());
    let pos_fraction = 0.4 + 0.2 * rng.random::<f64>();
    let dt = slot_us as f64 * 1e-6;
    let lambda_max = base * (1.0 + depth) * 1.5;
    let mut events = Vec::new();
    for taxel in 0..taxels {
        let gain = 0.5 + rng.random::<f64>();
        // thinning with exponential gaps, snapped to the 250 us slot grid
        let mut t = 0.0f64;
        let mut last_slot: Option<u64> = None;
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / lambda_max;
            let slot = (t / dt) as u64;
            if slot >= slots {
                break;
            }
            let phase_t = t / cfg.window_s * std::f64::consts::TAU;
            let m = 0.5 * ((cycles[0] * phase_t + phases[0]).sin() + (cycles[1] * phase_t + phases[1]).sin());
            let rate = base * gain * (1.0 + depth * m);
            if rng.random::<f64>() * lambda_max >= rate.max(0.0) || last_slot == Some(slot) {
                continue;
            }
            last_slot = Some(slot);
            let p = if rng.random::<f64>() < pos_fraction {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            events.push(SpikeEvent::new(slot * slot_us, taxel as u32, p));
        }
    }
    events.sort_by_key(|e| (e.t, e.taxel));
    let train = SpikeTrain::new(layouts, events, NUSKIN_RATE_HZ, duration_us)?;
    Ok(
        Recording::new(Payload::Spikes(train), Label::class(class, cfg.classes)?)
            .with_meta("trial", index.to_string())
            .with_meta("seed", cfg.seed.to_string()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_respect_rod_and_are_deterministic() {
        let cfg = TapDatasetConfig::rod(20.0, SignalVariant::Spikes, 40, 7).unwrap();
        let a = generate_tap_dataset(&cfg).unwrap();
        let b = generate_tap_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        for r in a.recordings() {
            let v = r.label.value();
            assert!((0.0..=20.0).contains(&v));
            let s = r.payload.as_spikes().unwrap();
            assert_eq!(s.duration_us(), 300_000);
            assert!(s.events().iter().all(|e| e.t.0 <= 300_000));
        }
    }

    #[test]
    fn analog_variant_is_single_channel() {
        let cfg = TapDatasetConfig::rod(30.0, SignalVariant::Analog, 3, 1).unwrap();
        let ds = generate_tap_dataset(&cfg).unwrap();
        let a = ds.recordings()[0].payload.as_analog().unwrap();
        assert_eq!(a.len(), 1200);
        assert_eq!(a.channel_name(), "PAC");
    }

    #[test]
    fn degenerate_sampler_rejected() {
        let mut cfg = TapDatasetConfig::rod(20.0, SignalVariant::Spikes, 3, 1).unwrap();
        cfg.sampler = PositionSampler::Uniform { min_m: 0.05, max_m: 0.05 };
        assert!(matches!(generate_tap_dataset(&cfg), Err(Error::InvalidSampler(_))));
        cfg.sampler = PositionSampler::Grid(vec![]);
        assert!(matches!(generate_tap_dataset(&cfg), Err(Error::InvalidSampler(_))));
    }

    #[test]
    fn surrogate_is_balanced_and_labeled() {
        let mut cfg = SurrogateConfig::food(3);
        cfg.per_class = 2;
        let ds = generate_surrogate_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 14);
        assert_eq!(ds.provenance(), Provenance::SyntheticSurrogate);
        let mut counts = [0; 7];
        for r in ds.recordings() {
            counts[r.label.value() as usize] += 1;
        }
        assert_eq!(counts, [2; 7]);
    }
}
