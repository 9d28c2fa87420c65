use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{run_protocol_with, ProtocolReport, RunOptions};
use super::spec::ProtocolSpec;
use crate::error::{Error, Result};
use crate::features::{decimate, spike_downsample, tau_for_rate, Antialias};
use crate::model::{select_taxels, Dataset, Payload};

/// Reports along one experimental axis (rate, taxel group, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub axis: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: String,
    pub report: ProtocolReport,
}

impl Series {
    pub fn single(label: impl Into<String>, report: ProtocolReport) -> Self {
        Series {
            axis: "run".into(),
            points: vec![SeriesPoint { x: label.into(), report }],
        }
    }

    pub fn reports(&self) -> impl Iterator<Item = &ProtocolReport> {
        self.points.iter().map(|p| &p.report)
    }
}

/// Native sampling rate shared by every recording.
pub fn native_rate(data: &Dataset) -> Result<f64> {
    let rate = |p: &Payload| match p {
        Payload::Spikes(t) => t.nominal_rate_hz(),
        Payload::Analog(a) => a.rate_hz(),
    };
    let r0 = rate(&data.recordings()[0].payload);
    if data.recordings().iter().any(|r| rate(&r.payload) != r0) {
        return Err(Error::InvalidData("recordings differ in sampling rate".into()));
    }
    Ok(r0)
}

/// Simulates a lower sampling rate: refractory spike dropping with
/// `tau = 1 / rate`, or anti-aliased decimation for analog streams.
pub fn resample_dataset(data: &Dataset, rate_hz: f64) -> Result<Dataset> {
    let native = native_rate(data)?;
    if !(rate_hz > 0.0) || rate_hz > native {
        return Err(Error::InvalidRate(format!(
            "target {rate_hz} Hz must lie in (0, {native}] Hz"
        )));
    }
    if rate_hz == native {
        return Ok(data.clone());
    }
    let tau = tau_for_rate(rate_hz)?;
    data.map_payloads(|p| {
        Ok(match p {
            Payload::Spikes(t) => Payload::Spikes(spike_downsample(t, tau)),
            Payload::Analog(a) => Payload::Analog(decimate(a, rate_hz, Antialias::On)?.signal),
        })
    })
}

fn rate_label(r: f64) -> String {
    format!("{r}")
}

/// One protocol run per rate, in the order given.
///
/// With `spec.reuse_hyperparams` the native-rate run picks hyperparameters
/// per repeat and every other rate reuses them without a search.
pub fn sweep_sampling_rate(spec: &ProtocolSpec, data: &Dataset, rates_hz: &[f64]) -> Result<Series> {
    if rates_hz.is_empty() {
        return Err(Error::InvalidParameter("no rates to sweep".into()));
    }
    let native = native_rate(data)?;
    if let Some(r) = rates_hz.iter().find(|&&r| !(r > 0.0 && r <= native)) {
        return Err(Error::InvalidRate(format!("rate {r} Hz outside (0, {native}] Hz")));
    }
    let fixed = if spec.reuse_hyperparams {
        let base = run_protocol_with(spec, data, &RunOptions::default())?;
        Some(base.repeats.iter().map(|r| r.hyperparams.clone()).collect::<Vec<_>>())
    } else {
        None
    };
    let points = rates_hz
        .par_iter()
        .map(|&rate| {
            let d = resample_dataset(data, rate)?;
            let opts = RunOptions {
                fixed_hyperparams: if rate == native { None } else { fixed.clone() },
                ..RunOptions::default()
            };
            let report = run_protocol_with(spec, &d, &opts)
                .map_err(|e| Error::Protocol(format!("at {rate} Hz: {e}")))?;
            Ok(SeriesPoint {
                x: rate_label(rate),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Series {
        axis: "rate_hz".into(),
        points,
    })
}

/// Named set of taxel indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxelGroup {
    pub name: String,
    pub taxels: BTreeSet<u32>,
}

impl TaxelGroup {
    pub fn range(name: impl Into<String>, taxels: std::ops::Range<u32>) -> Self {
        TaxelGroup {
            name: name.into(),
            taxels: taxels.collect(),
        }
    }

    /// `all`, `left-40`, `right-40` or `single-taxel` for a train of
    /// `taxel_count` taxels.
    pub fn preset(name: &str, taxel_count: usize) -> Result<Vec<TaxelGroup>> {
        let n = taxel_count as u32;
        let need = |min: u32| -> Result<()> {
            if n < min {
                return Err(Error::InvalidSelection(format!(
                    "preset `{name}` needs {min} taxels, data has {n}"
                )));
            }
            Ok(())
        };
        Ok(match name {
            "all" => vec![TaxelGroup::range(format!("all-{n}"), 0..n)],
            "left-40" => {
                need(40)?;
                vec![TaxelGroup::range("left-40", 0..40)]
            }
            "right-40" => {
                need(80)?;
                vec![TaxelGroup::range("right-40", 40..80)]
            }
            "single-taxel" => (0..n).map(|t| TaxelGroup::range(format!("taxel-{t}"), t..t + 1)).collect(),
            other => {
                return Err(Error::InvalidSelection(format!(
                    "unknown group preset `{other}` (expected all, left-40, right-40, single-taxel)"
                )))
            }
        })
    }
}

/// One protocol run per taxel group, in the order given.
pub fn ablate_taxels(spec: &ProtocolSpec, data: &Dataset, groups: &[TaxelGroup]) -> Result<Series> {
    if groups.is_empty() {
        return Err(Error::InvalidSelection("no taxel groups".into()));
    }
    let taxel_count = match &data.recordings()[0].payload {
        Payload::Spikes(t) => t.taxel_count(),
        Payload::Analog(_) => {
            return Err(Error::InvalidInput("taxel ablation needs spike recordings".into()));
        }
    };
    for g in groups {
        if g.taxels.is_empty() {
            return Err(Error::InvalidSelection(format!("group `{}` is empty", g.name)));
        }
        if let Some(t) = g.taxels.iter().find(|&&t| t as usize >= taxel_count) {
            return Err(Error::InvalidSelection(format!(
                "group `{}` names taxel {t} but the data has {taxel_count}",
                g.name
            )));
        }
    }
    let points = groups
        .par_iter()
        .map(|g| {
            let d = if g.taxels.len() == taxel_count {
                data.clone()
            } else {
                data.map_payloads(|p| match p {
                    Payload::Spikes(t) => Ok(Payload::Spikes(select_taxels(t, &g.taxels)?)),
                    Payload::Analog(_) => unreachable!("checked above"),
                })?
            };
            let report = run_protocol_with(spec, &d, &RunOptions::default())
                .map_err(|e| Error::Protocol(format!("group {}: {e}", g.name)))?;
            Ok(SeriesPoint {
                x: g.name.clone(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Series {
        axis: "group".into(),
        points,
    })
}
