//! Sensor payloads, labels, recordings and datasets.
//!
//! Two payload kinds are modelled: asynchronous multi-taxel spike streams
//! (event skin) and uniformly sampled scalar streams (hydrophone-style
//! pressure channel). Timestamps are integer microseconds.

pub mod io;
mod segment;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use segment::{
    detect_first_contact, segment_contact_window, segment_fixed_window, select_taxels,
    ContactThreshold, POST_CONTACT_US, PRE_CONTACT_US,
};

/// Microseconds since recording start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_ms(ms: f64) -> Self {
        Timestamp((ms * 1e3).round() as u64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-6
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(s: i64) -> Option<Self> {
        match s {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    /// Channel index used by split-polarity representations.
    pub fn channel(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub t: Timestamp,
    pub taxel: u32,
    pub polarity: Polarity,
}

impl SpikeEvent {
    pub fn new(t_us: u64, taxel: u32, polarity: Polarity) -> Self {
        SpikeEvent {
            t: Timestamp(t_us),
            taxel,
            polarity,
        }
    }
}

/// Rectangular taxel lattice of one finger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxelLayout {
    pub rows: usize,
    pub cols: usize,
    pub finger_id: String,
}

impl TaxelLayout {
    pub fn new(rows: usize, cols: usize, finger_id: impl Into<String>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidData("taxel layout must be non-empty".into()));
        }
        Ok(TaxelLayout {
            rows,
            cols,
            finger_id: finger_id.into(),
        })
    }

    /// 8x5 lattice, 40 taxels.
    pub fn nuskin(finger_id: impl Into<String>) -> Self {
        TaxelLayout {
            rows: 8,
            cols: 5,
            finger_id: finger_id.into(),
        }
    }

    pub fn taxel_count(&self) -> usize {
        self.rows * self.cols
    }
}

pub const NUSKIN_RATE_HZ: f64 = 4000.0;

/// Time-ordered multi-taxel spike events over a window `[0, duration)`.
///
/// Two-finger trains carry both layouts; taxels are indexed densely with the
/// first finger occupying `0..40` and the second `40..80`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    layouts: Vec<TaxelLayout>,
    events: Vec<SpikeEvent>,
    nominal_rate_hz: f64,
    duration_us: u64,
}

impl SpikeTrain {
    pub fn new(
        layouts: Vec<TaxelLayout>,
        events: Vec<SpikeEvent>,
        nominal_rate_hz: f64,
        duration_us: u64,
    ) -> Result<Self> {
        if layouts.is_empty() {
            return Err(Error::InvalidData("spike train needs at least one layout".into()));
        }
        if !(nominal_rate_hz > 0.0 && nominal_rate_hz.is_finite()) {
            return Err(Error::InvalidData(format!(
                "nominal rate must be positive, got {nominal_rate_hz}"
            )));
        }
        let taxels: usize = layouts.iter().map(TaxelLayout::taxel_count).sum();
        let min_gap = min_spacing_us(nominal_rate_hz);
        let mut last_per_taxel: Vec<Option<u64>> = vec![None; taxels];
        let mut prev_t = 0u64;
        for (i, e) in events.iter().enumerate() {
            if e.t.0 < prev_t {
                return Err(Error::InvalidData(format!(
                    "events not sorted by time at index {i}"
                )));
            }
            prev_t = e.t.0;
            let taxel = e.taxel as usize;
            if taxel >= taxels {
                return Err(Error::InvalidData(format!(
                    "taxel {taxel} out of range for {taxels}-taxel layout"
                )));
            }
            if e.t.0 >= duration_us {
                return Err(Error::InvalidData(format!(
                    "event at {} outside window of {duration_us}us",
                    e.t
                )));
            }
            if let Some(last) = last_per_taxel[taxel] {
                if e.t.0 - last < min_gap {
                    return Err(Error::InvalidData(format!(
                        "taxel {taxel}: events {}us apart, below the {min_gap}us rate bound",
                        e.t.0 - last
                    )));
                }
            }
            last_per_taxel[taxel] = Some(e.t.0);
        }
        Ok(SpikeTrain {
            layouts,
            events,
            nominal_rate_hz,
            duration_us,
        })
    }

    pub fn empty(layouts: Vec<TaxelLayout>, nominal_rate_hz: f64, duration_us: u64) -> Result<Self> {
        SpikeTrain::new(layouts, Vec::new(), nominal_rate_hz, duration_us)
    }

    pub fn layouts(&self) -> &[TaxelLayout] {
        &self.layouts
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn nominal_rate_hz(&self) -> f64 {
        self.nominal_rate_hz
    }

    pub fn duration_us(&self) -> u64 {
        self.duration_us
    }

    pub fn taxel_count(&self) -> usize {
        self.layouts.iter().map(TaxelLayout::taxel_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events of one taxel, in time order.
    pub fn taxel_events(&self, taxel: u32) -> impl Iterator<Item = &SpikeEvent> {
        self.events.iter().filter(move |e| e.taxel == taxel)
    }

    pub(crate) fn from_parts_unchecked(
        layouts: Vec<TaxelLayout>,
        events: Vec<SpikeEvent>,
        nominal_rate_hz: f64,
        duration_us: u64,
    ) -> Self {
        SpikeTrain {
            layouts,
            events,
            nominal_rate_hz,
            duration_us,
        }
    }
}

/// Smallest per-taxel spacing admitted at a given rate bound. Rates that do
/// not divide 1 s evenly round the period down to whole microseconds.
pub fn min_spacing_us(rate_hz: f64) -> u64 {
    (1e6 / rate_hz + 1e-9).floor() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogSignal {
    samples: Vec<f64>,
    rate_hz: f64,
    channel_name: String,
}

impl AnalogSignal {
    pub fn new(samples: Vec<f64>, rate_hz: f64, channel_name: impl Into<String>) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::InvalidData(format!("sampling rate must be positive, got {rate_hz}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite sample at index {i}")));
        }
        Ok(AnalogSignal {
            samples,
            rate_hz,
            channel_name: channel_name.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn channel_name(&self) -> &str {
        &self.channel_name
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_us(&self) -> u64 {
        (self.samples.len() as f64 * 1e6 / self.rate_hz).round() as u64
    }

    /// Sample index at (or just after) time `t`.
    pub fn index_at(&self, t: Timestamp) -> usize {
        (t.0 as f64 * self.rate_hz / 1e6 - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Label {
    /// Contact position in centimetres along the tool.
    Regression { position_cm: f64 },
    Class { id: usize, class_count: usize },
}

impl Label {
    pub fn regression(position_cm: f64, tool_length_cm: f64) -> Result<Self> {
        if !(position_cm.is_finite() && (0.0..=tool_length_cm).contains(&position_cm)) {
            return Err(Error::InvalidData(format!(
                "position {position_cm} cm outside [0, {tool_length_cm}]"
            )));
        }
        Ok(Label::Regression { position_cm })
    }

    pub fn class(id: usize, class_count: usize) -> Result<Self> {
        if id >= class_count {
            return Err(Error::InvalidData(format!(
                "class id {id} not below class count {class_count}"
            )));
        }
        Ok(Label::Class { id, class_count })
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, Label::Regression { .. })
    }

    /// Regression target or class id as a real number.
    pub fn value(&self) -> f64 {
        match *self {
            Label::Regression { position_cm } => position_cm,
            Label::Class { id, .. } => id as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Spikes(SpikeTrain),
    Analog(AnalogSignal),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Spikes(_) => PayloadKind::Spikes,
            Payload::Analog(_) => PayloadKind::Analog,
        }
    }

    pub fn duration_us(&self) -> u64 {
        match self {
            Payload::Spikes(s) => s.duration_us(),
            Payload::Analog(a) => a.duration_us(),
        }
    }

    pub fn as_spikes(&self) -> Option<&SpikeTrain> {
        match self {
            Payload::Spikes(s) => Some(s),
            Payload::Analog(_) => None,
        }
    }

    pub fn as_analog(&self) -> Option<&AnalogSignal> {
        match self {
            Payload::Analog(a) => Some(a),
            Payload::Spikes(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    Spikes,
    Analog,
}

pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub payload: Payload,
    pub label: Label,
    pub meta: Meta,
}

impl Recording {
    pub fn new(payload: Payload, label: Label) -> Self {
        Recording {
            payload,
            label,
            meta: Meta::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn id(&self) -> String {
        self.meta
            .get("trial")
            .cloned()
            .unwrap_or_else(|| "unnamed".to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskId {
    TapLocalization,
    GraspStability,
    FoodId,
}

impl TaskId {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::TapLocalization => "tap",
            TaskId::GraspStability => "grasp",
            TaskId::FoodId => "food",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tap" | "tap-localization" => Ok(TaskId::TapLocalization),
            "grasp" | "grasp-stability" => Ok(TaskId::GraspStability),
            "food" | "food-id" => Ok(TaskId::FoodId),
            other => Err(Error::InvalidInput(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic,
    SyntheticSurrogate,
    Imported,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Synthetic => "synthetic",
            Provenance::SyntheticSurrogate => "synthetic-surrogate",
            Provenance::Imported => "imported",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Provenance::Synthetic),
            "synthetic-surrogate" => Ok(Provenance::SyntheticSurrogate),
            "imported" => Ok(Provenance::Imported),
            other => Err(Error::InvalidInput(format!("unknown provenance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    recordings: Vec<Recording>,
    task: TaskId,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(recordings: Vec<Recording>, task: TaskId, provenance: Provenance) -> Result<Self> {
        let first = recordings
            .first()
            .ok_or_else(|| Error::InvalidData("dataset must hold at least one recording".into()))?;
        let kind = first.payload.kind();
        let regression = first.label.is_regression();
        for (i, r) in recordings.iter().enumerate() {
            if r.payload.kind() != kind {
                return Err(Error::InvalidData(format!(
                    "recording {i} has a different payload kind"
                )));
            }
            if r.label.is_regression() != regression {
                return Err(Error::InvalidData(format!(
                    "recording {i} mixes regression and class labels"
                )));
            }
        }
        Ok(Dataset {
            recordings,
            task,
            provenance,
        })
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn payload_kind(&self) -> PayloadKind {
        self.recordings[0].payload.kind()
    }

    pub fn is_regression(&self) -> bool {
        self.recordings[0].label.is_regression()
    }

    pub fn class_count(&self) -> Option<usize> {
        match self.recordings[0].label {
            Label::Class { class_count, .. } => Some(class_count),
            Label::Regression { .. } => None,
        }
    }

    /// Applies `f` to every payload, keeping labels and metadata.
    pub fn map_payloads<F>(&self, f: F) -> Result<Dataset>
    where
        F: Fn(&Payload) -> Result<Payload>,
    {
        let recordings = self
            .recordings
            .iter()
            .map(|r| {
                Ok(Recording {
                    payload: f(&r.payload)?,
                    label: r.label,
                    meta: r.meta.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(recordings, self.task, self.provenance)
    }

    /// SHA-256 over payloads, labels and task, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task.as_str().as_bytes());
        for r in &self.recordings {
            hash_recording(&mut h, r);
        }
        hex(&h.finalize())
    }
}

fn hash_recording(h: &mut Sha256, r: &Recording) {
    match &r.payload {
        Payload::Spikes(s) => {
            h.update(b"S");
            h.update(s.duration_us.to_le_bytes());
            h.update(s.nominal_rate_hz.to_le_bytes());
            h.update((s.taxel_count() as u64).to_le_bytes());
            for e in &s.events {
                h.update(e.t.0.to_le_bytes());
                h.update(e.taxel.to_le_bytes());
                h.update([e.polarity.sign() as u8]);
            }
        }
        Payload::Analog(a) => {
            h.update(b"A");
            h.update(a.rate_hz.to_le_bytes());
            for v in &a.samples {
                h.update(v.to_le_bytes());
            }
        }
    }
    match r.label {
        Label::Regression { position_cm } => {
            h.update(b"R");
            h.update(position_cm.to_le_bytes());
        }
        Label::Class { id, class_count } => {
            h.update(b"C");
            h.update((id as u64).to_le_bytes());
            h.update((class_count as u64).to_le_bytes());
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
