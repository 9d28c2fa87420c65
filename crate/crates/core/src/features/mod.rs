//! Feature extraction: binned counts, magnitude spectra, autoencoder codes
//! and event spike tensors, plus rate-reduction of raw streams.

mod autoencoder;
mod bins;
pub mod cache;
mod downsample;
mod est;
mod fft;

pub use autoencoder::{autoencoder_encode, autoencoder_fit, AutoencoderModel, AutoencoderParams, CODE_DIM};
pub use bins::{bin_spike_counts, BinMode};
pub use downsample::{decimate, spike_downsample, tau_for_rate, Antialias, Decimated};
pub use est::{
    est_features, est_fit_kernel, est_kernel_grad, sample_times, EstFitParams, EstKernel, EstNet, EstTargets,
    DEFAULT_SAMPLES,
};
pub use fft::{fft_features, one_sided_len, one_sided_magnitudes, padded_spectrum, FftInput, DEFAULT_KEEP_COEFFS};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Label, Payload, Recording};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    provenance: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, provenance: String) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite feature at index {i} ({provenance})")));
        }
        Ok(FeatureVector { values, provenance })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    steps: Vec<Vec<f64>>,
    step_ms: f64,
}

impl FeatureSequence {
    pub fn new(steps: Vec<Vec<f64>>, step_ms: f64) -> Result<Self> {
        if !(step_ms > 0.0 && step_ms.is_finite()) {
            return Err(Error::InvalidParameter(format!("step_ms must be positive, got {step_ms}")));
        }
        if let Some(first) = steps.first() {
            if steps.iter().any(|s| s.len() != first.len()) {
                return Err(Error::InvalidInput("sequence steps differ in dimension".into()));
            }
        }
        if steps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in sequence".into()));
        }
        Ok(FeatureSequence { steps, step_ms })
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.steps
    }

    pub fn step_ms(&self) -> f64 {
        self.step_ms
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    /// Values of one dimension across all steps.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s[c]).collect()
    }

    /// Steps concatenated in time order.
    pub fn flatten(&self) -> Vec<f64> {
        self.steps.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EstKernelSpec {
    Triangle { width_ms: f64 },
    Learned(EstFitParams),
}

/// Extractor choice with all of its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureSpec {
    /// Binned counts (spikes) or raw samples (analog).
    Baseline { bin_ms: f64, mode: BinMode },
    Fft {
        bin_ms: f64,
        mode: BinMode,
        /// `None` keeps `min(64, one-sided length)`.
        keep_coeffs: Option<usize>,
        pooled: bool,
    },
    Autoencoder {
        bin_ms: f64,
        mode: BinMode,
        params: AutoencoderParams,
    },
    Est { n_samples: usize, kernel: EstKernelSpec },
}

impl FeatureSpec {
    pub fn baseline(bin_ms: f64) -> Self {
        FeatureSpec::Baseline {
            bin_ms,
            mode: BinMode::SplitPolarity,
        }
    }

    pub fn fft(bin_ms: f64) -> Self {
        FeatureSpec::Fft {
            bin_ms,
            mode: BinMode::SplitPolarity,
            keep_coeffs: None,
            pooled: false,
        }
    }

    pub fn autoencoder(bin_ms: f64) -> Self {
        FeatureSpec::Autoencoder {
            bin_ms,
            mode: BinMode::Unsigned,
            params: AutoencoderParams::default(),
        }
    }

    pub fn est_fixed() -> Self {
        FeatureSpec::Est {
            n_samples: DEFAULT_SAMPLES,
            kernel: EstKernelSpec::Triangle { width_ms: 12.0 },
        }
    }

    /// Short family name used in reports.
    pub fn family(&self) -> &'static str {
        match self {
            FeatureSpec::Baseline { .. } => "baseline",
            FeatureSpec::Fft { .. } => "fft",
            FeatureSpec::Autoencoder { .. } => "autoencoder",
            FeatureSpec::Est { .. } => "est",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(
            self,
            FeatureSpec::Autoencoder { .. }
                | FeatureSpec::Est {
                    kernel: EstKernelSpec::Learned(_),
                    ..
                }
        )
    }

    /// Canonical serialization; stable across runs.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("feature spec serializes")
    }

    pub fn param_hash(&self) -> String {
        let d = Sha256::digest(self.canonical().as_bytes());
        crate::model::hex(&d[..8])
    }

    /// Fits learned parts on `train` only. Non-learned specs ignore the data.
    pub fn fit(&self, train: &[&Recording], seed: u64) -> Result<Extractor> {
        let learned = match self {
            FeatureSpec::Autoencoder { bin_ms, mode, params } => {
                let vs = train
                    .iter()
                    .map(|r| base_vector(r, *bin_ms, *mode))
                    .collect::<Result<Vec<_>>>()?;
                let hp = AutoencoderParams {
                    seed: params.seed ^ seed,
                    ..*params
                };
                Some(Learned::Autoencoder(autoencoder_fit(&vs, &hp)?))
            }
            FeatureSpec::Est {
                n_samples,
                kernel: EstKernelSpec::Learned(p),
            } => {
                let trains = train.iter().map(|r| spikes_of(r)).collect::<Result<Vec<_>>>()?;
                let regression: Vec<f64>;
                let ids: Vec<usize>;
                let targets = match train.first().map(|r| &r.label) {
                    Some(Label::Class { class_count, .. }) => {
                        ids = train.iter().map(|r| r.label.value() as usize).collect();
                        EstTargets::Classes {
                            ids: &ids,
                            count: *class_count,
                        }
                    }
                    _ => {
                        regression = train.iter().map(|r| r.label.value()).collect();
                        EstTargets::Regression(&regression)
                    }
                };
                let fp = EstFitParams {
                    n_samples: *n_samples,
                    seed: p.seed ^ seed,
                    ..*p
                };
                Some(Learned::Est(est_fit_kernel(&trains, targets, &fp)?))
            }
            _ => None,
        };
        Ok(Extractor {
            spec: self.clone(),
            learned,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Learned {
    Autoencoder(AutoencoderModel),
    Est(EstNet),
}

/// A [`FeatureSpec`] with its learned parts fitted; read-only afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub spec: FeatureSpec,
    pub learned: Option<Learned>,
}

impl Extractor {
    /// Extractor for a spec without learned parts.
    pub fn fixed(spec: FeatureSpec) -> Result<Self> {
        if spec.is_learned() {
            return Err(Error::Usage(format!("{} features must be fitted first", spec.family())));
        }
        Ok(Extractor { spec, learned: None })
    }

    pub fn vector(&self, rec: &Recording) -> Result<FeatureVector> {
        match (&self.spec, &self.learned) {
            (FeatureSpec::Baseline { bin_ms, mode }, _) => base_vector(rec, *bin_ms, *mode),
            (
                FeatureSpec::Fft {
                    bin_ms,
                    mode,
                    keep_coeffs,
                    pooled,
                },
                _,
            ) => match &rec.payload {
                Payload::Analog(sig) => {
                    let keep = keep_coeffs.unwrap_or(DEFAULT_KEEP_COEFFS.min(one_sided_len(sig.len())));
                    fft_features(FftInput::Analog(sig), keep, *pooled)
                }
                Payload::Spikes(train) => {
                    let seq = bin_spike_counts(train, *bin_ms, *mode)?;
                    let keep = keep_coeffs.unwrap_or(DEFAULT_KEEP_COEFFS.min(one_sided_len(seq.len())));
                    fft_features(FftInput::Sequence(&seq), keep, *pooled)
                }
            },
            (FeatureSpec::Autoencoder { bin_ms, mode, .. }, Some(Learned::Autoencoder(m))) => {
                autoencoder_encode(m, &base_vector(rec, *bin_ms, *mode)?)
            }
            (FeatureSpec::Est { n_samples, kernel }, learned) => {
                let train = spikes_of(rec)?;
                match (kernel, learned) {
                    (EstKernelSpec::Triangle { width_ms }, _) => est_features(
                        train,
                        &EstKernel::Triangle {
                            width_us: width_ms * 1e3,
                        },
                        *n_samples,
                    ),
                    (EstKernelSpec::Learned(_), Some(Learned::Est(net))) => {
                        est_features(train, &EstKernel::Learned(net.clone()), *n_samples)
                    }
                    _ => Err(Error::Usage("learned est kernel not fitted".into())),
                }
            }
            _ => Err(Error::Usage(format!("{} features must be fitted first", self.spec.family()))),
        }
    }

    /// Time-ordered representation for recurrent models.
    pub fn sequence(&self, rec: &Recording) -> Result<FeatureSequence> {
        match &self.spec {
            FeatureSpec::Baseline { bin_ms, mode } => base_sequence(rec, *bin_ms, *mode),
            FeatureSpec::Est { n_samples, .. } => {
                let v = self.vector(rec)?;
                let n = *n_samples;
                let channels = v.len() / n;
                let steps = (0..n)
                    .map(|j| (0..channels).map(|c| v.values()[c * n + j]).collect())
                    .collect();
                let step_ms = rec.payload.duration_us() as f64 / 1e3 / n as f64;
                FeatureSequence::new(steps, step_ms)
            }
            other => Err(Error::InvalidParameter(format!(
                "{} features summarize the whole window and have no sequence form",
                other.family()
            ))),
        }
    }
}

fn spikes_of(rec: &Recording) -> Result<&crate::model::SpikeTrain> {
    rec.payload
        .as_spikes()
        .ok_or_else(|| Error::InvalidInput("est features need spike payloads".into()))
}

/// Binned counts for spikes; analog samples chunked into `bin_ms` steps.
pub fn base_sequence(rec: &Recording, bin_ms: f64, mode: BinMode) -> Result<FeatureSequence> {
    match &rec.payload {
        Payload::Spikes(t) => bin_spike_counts(t, bin_ms, mode),
        Payload::Analog(sig) => {
            if !(bin_ms > 0.0) {
                return Err(Error::InvalidParameter("bin width must be positive".into()));
            }
            let per = ((bin_ms * sig.rate_hz() / 1e3).round() as usize).max(1);
            let steps = sig.samples().chunks_exact(per).map(<[f64]>::to_vec).collect();
            FeatureSequence::new(steps, per as f64 * 1e3 / sig.rate_hz())
        }
    }
}

/// Flattened binned counts for spikes, raw samples for analog.
pub fn base_vector(rec: &Recording, bin_ms: f64, mode: BinMode) -> Result<FeatureVector> {
    match &rec.payload {
        Payload::Spikes(t) => {
            let seq = bin_spike_counts(t, bin_ms, mode)?;
            FeatureVector::new(seq.flatten(), format!("baseline(bin_ms={bin_ms},mode={})", mode.as_str()))
        }
        Payload::Analog(sig) => FeatureVector::new(sig.samples().to_vec(), "baseline(raw)".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnalogSignal, Label, Polarity, SpikeEvent, SpikeTrain, TaxelLayout};

    fn spike_rec() -> Recording {
        let ev = vec![
            SpikeEvent::new(1000, 0, Polarity::Positive),
            SpikeEvent::new(7000, 3, Polarity::Negative),
        ];
        let t = SpikeTrain::new(vec![TaxelLayout::new(2, 2, "x").unwrap()], ev, 4000.0, 20_000).unwrap();
        Recording::new(Payload::Spikes(t), Label::regression(3.0, 20.0).unwrap())
    }

    #[test]
    fn non_finite_vector_rejected() {
        assert!(matches!(
            FeatureVector::new(vec![1.0, f64::NAN], "x".into()),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn sequence_rejects_ragged_steps() {
        assert!(FeatureSequence::new(vec![vec![1.0], vec![1.0, 2.0]], 5.0).is_err());
        assert!(FeatureSequence::new(vec![], 0.0).is_err());
    }

    #[test]
    fn fixed_extractors_shape() {
        let r = spike_rec();
        let base = Extractor::fixed(FeatureSpec::baseline(5.0)).unwrap();
        assert_eq!(base.vector(&r).unwrap().len(), 4 * 4 * 2);
        assert_eq!(base.sequence(&r).unwrap().len(), 4);
        let fft = Extractor::fixed(FeatureSpec::fft(5.0)).unwrap();
        assert_eq!(fft.vector(&r).unwrap().len(), 8 * 3);
        assert!(fft.sequence(&r).is_err());
        let est = Extractor::fixed(FeatureSpec::est_fixed()).unwrap();
        assert_eq!(est.vector(&r).unwrap().len(), 4 * 2 * 50);
        let s = est.sequence(&r).unwrap();
        assert_eq!((s.len(), s.dim()), (50, 8));
        assert!(Extractor::fixed(FeatureSpec::autoencoder(5.0)).is_err());
    }

    #[test]
    fn analog_sequence_chunks_samples() {
        let sig = AnalogSignal::new((0..45).map(f64::from).collect(), 4000.0, "PAC").unwrap();
        let r = Recording::new(Payload::Analog(sig), Label::regression(1.0, 20.0).unwrap());
        let s = base_sequence(&r, 5.0, BinMode::Unsigned).unwrap();
        assert_eq!((s.len(), s.dim()), (2, 20));
        assert_eq!(s.steps()[1][0], 20.0);
    }

    #[test]
    fn param_hash_tracks_parameters() {
        assert_eq!(FeatureSpec::fft(5.0).param_hash(), FeatureSpec::fft(5.0).param_hash());
        assert_ne!(FeatureSpec::fft(5.0).param_hash(), FeatureSpec::fft(50.0).param_hash());
    }
}
