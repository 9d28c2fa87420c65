//! Text file formats for recordings and datasets.
//!
//! Event files hold one `t_us,taxel,polarity` line per spike after a
//! `#nuskin-events v1 taxels=<n> rate_hz=<r>` header; analog files hold
//! `t_us,value` lines after `#analog v1 rate_hz=<r> channel=<name>`. A
//! manifest lists `path,label_kind,label_value,task,meta...` per recording.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! encode/decode is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    AnalogSignal, Dataset, Label, Meta, Payload, Polarity, Provenance, Recording, SpikeEvent,
    SpikeTrain, TaskId, TaxelLayout,
};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.csv";

pub fn events_to_string(train: &SpikeTrain) -> String {
    let layouts: Vec<String> = train
        .layouts()
        .iter()
        .map(|l| format!("{}:{}x{}", l.finger_id, l.rows, l.cols))
        .collect();
    let mut s = format!(
        "#nuskin-events v1 taxels={} rate_hz={} duration_us={} layouts={}\n",
        train.taxel_count(),
        train.nominal_rate_hz(),
        train.duration_us(),
        layouts.join(";")
    );
    for e in train.events() {
        let _ = writeln!(s, "{},{},{}", e.t.0, e.taxel, e.polarity.sign());
    }
    s
}

pub fn parse_events(text: &str, origin: &str) -> Result<SpikeTrain> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(origin, 1, "missing header"))?;
    let fields = header_fields(header, "#nuskin-events", origin)?;
    let taxels: usize = required(&fields, "taxels", origin)?;
    let rate: f64 = required(&fields, "rate_hz", origin)?;
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(t), Some(tx), Some(p), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(parse_err(origin, i + 1, "expected t_us,taxel,polarity"));
        };
        let t: u64 = t.trim().parse().map_err(|_| parse_err(origin, i + 1, "bad t_us"))?;
        let taxel: u32 = tx.trim().parse().map_err(|_| parse_err(origin, i + 1, "bad taxel"))?;
        let pol = p
            .trim()
            .parse::<i64>()
            .ok()
            .and_then(Polarity::from_sign)
            .ok_or_else(|| parse_err(origin, i + 1, "polarity must be 1 or -1"))?;
        events.push(SpikeEvent::new(t, taxel, pol));
    }
    let duration = match fields.get("duration_us") {
        Some(v) => v.parse().map_err(|_| parse_err(origin, 1, "bad duration_us"))?,
        None => events.last().map_or(0, |e| e.t.0) + super::min_spacing_us(rate).max(1),
    };
    let layouts = match fields.get("layouts") {
        Some(v) => parse_layouts(v).ok_or_else(|| parse_err(origin, 1, "bad layouts"))?,
        None => default_layouts(taxels),
    };
    let total: usize = layouts.iter().map(TaxelLayout::taxel_count).sum();
    if total != taxels {
        return Err(parse_err(origin, 1, "layouts disagree with taxel count"));
    }
    SpikeTrain::new(layouts, events, rate, duration)
}

fn default_layouts(taxels: usize) -> Vec<TaxelLayout> {
    match taxels {
        40 => vec![TaxelLayout::nuskin("left")],
        80 => vec![TaxelLayout::nuskin("left"), TaxelLayout::nuskin("right")],
        n => vec![TaxelLayout {
            rows: 1,
            cols: n.max(1),
            finger_id: "f0".into(),
        }],
    }
}

fn parse_layouts(v: &str) -> Option<Vec<TaxelLayout>> {
    v.split(';')
        .map(|part| {
            let (id, dims) = part.rsplit_once(':')?;
            let (r, c) = dims.split_once('x')?;
            TaxelLayout::new(r.parse().ok()?, c.parse().ok()?, id).ok()
        })
        .collect()
}

pub fn analog_to_string(sig: &AnalogSignal) -> String {
    let mut s = format!(
        "#analog v1 rate_hz={} channel={}\n",
        sig.rate_hz(),
        sig.channel_name()
    );
    for (i, v) in sig.samples().iter().enumerate() {
        let t = (i as f64 * 1e6 / sig.rate_hz()).round() as u64;
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

pub fn parse_analog(text: &str, origin: &str) -> Result<AnalogSignal> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(origin, 1, "missing header"))?;
    let fields = header_fields(header, "#analog", origin)?;
    let rate: f64 = required(&fields, "rate_hz", origin)?;
    let channel = fields.get("channel").cloned().unwrap_or_else(|| "PAC".into());
    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (_, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err(origin, i + 1, "expected t_us,value"))?;
        samples.push(
            v.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(origin, i + 1, "bad value"))?,
        );
    }
    AnalogSignal::new(samples, rate, channel)
}

fn header_fields(line: &str, magic: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) || parts.next() != Some("v1") {
        return Err(parse_err(origin, 1, &format!("expected `{magic} v1` header")));
    }
    parts
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| parse_err(origin, 1, &format!("malformed header field `{kv}`")))
        })
        .collect()
}

fn required<T: std::str::FromStr>(f: &BTreeMap<String, String>, key: &str, origin: &str) -> Result<T> {
    f.get(key)
        .ok_or_else(|| parse_err(origin, 1, &format!("header lacks `{key}`")))?
        .parse()
        .map_err(|_| parse_err(origin, 1, &format!("bad `{key}`")))
}

fn parse_err(origin: &str, line: usize, reason: &str) -> Error {
    Error::Parse {
        path: origin.to_string(),
        line,
        reason: reason.to_string(),
    }
}

pub fn payload_to_string(p: &Payload) -> String {
    match p {
        Payload::Spikes(s) => events_to_string(s),
        Payload::Analog(a) => analog_to_string(a),
    }
}

pub fn parse_payload(text: &str, origin: &str) -> Result<Payload> {
    if text.starts_with("#nuskin-events") {
        parse_events(text, origin).map(Payload::Spikes)
    } else if text.starts_with("#analog") {
        parse_analog(text, origin).map(Payload::Analog)
    } else {
        Err(parse_err(origin, 1, "unknown payload header"))
    }
}

fn label_fields(l: &Label) -> (&'static str, String) {
    match *l {
        Label::Regression { position_cm } => ("regression", format!("{position_cm}")),
        Label::Class { id, class_count } => ("class", format!("{id}/{class_count}")),
    }
}

fn parse_label(kind: &str, value: &str, meta: &Meta, origin: &str, line: usize) -> Result<Label> {
    match kind {
        "regression" => {
            let pos: f64 = value
                .parse()
                .map_err(|_| parse_err(origin, line, "bad regression value"))?;
            let len = meta
                .get("tool_length_cm")
                .and_then(|v| v.parse().ok())
                .unwrap_or(f64::INFINITY);
            Label::regression(pos, len)
        }
        "class" => {
            let (id, count) = value
                .split_once('/')
                .ok_or_else(|| parse_err(origin, line, "class label must be id/count"))?;
            Label::class(
                id.parse().map_err(|_| parse_err(origin, line, "bad class id"))?,
                count.parse().map_err(|_| parse_err(origin, line, "bad class count"))?,
            )
        }
        _ => Err(parse_err(origin, line, "label_kind must be regression or class")),
    }
}

fn payload_ext(p: &Payload) -> &'static str {
    match p {
        Payload::Spikes(_) => "events",
        Payload::Analog(_) => "analog",
    }
}

/// Builds the manifest text for recordings stored at `paths`.
pub fn manifest_to_string(ds: &Dataset, paths: &[String]) -> Result<String> {
    let mut s = format!(
        "#manifest v1 task={} provenance={}\n",
        ds.task(),
        ds.provenance().as_str()
    );
    for (r, path) in ds.recordings().iter().zip(paths) {
        let (kind, value) = label_fields(&r.label);
        let _ = write!(s, "{path},{kind},{value},{}", ds.task());
        for (k, v) in &r.meta {
            if [k, v].iter().any(|x| x.contains([',', '=', '\n'])) {
                return Err(Error::InvalidData(format!(
                    "metadata `{k}={v}` contains a reserved character"
                )));
            }
            let _ = write!(s, ",{k}={v}");
        }
        s.push('\n');
    }
    Ok(s)
}

/// Writes every recording plus `manifest.csv` into `dir`; returns the
/// manifest path.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<PathBuf> {
    let rec_dir = dir.join("recordings");
    fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let mut paths = Vec::with_capacity(ds.len());
    for (i, r) in ds.recordings().iter().enumerate() {
        let rel = format!("recordings/{i:06}.{}", payload_ext(&r.payload));
        let full = dir.join(&rel);
        fs::write(&full, payload_to_string(&r.payload)).map_err(|e| Error::io(&full, e))?;
        paths.push(rel);
    }
    let manifest = dir.join(MANIFEST_NAME);
    fs::write(&manifest, manifest_to_string(ds, &paths)?).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// One manifest line, resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub line: usize,
    pub path: PathBuf,
    pub label: Label,
    pub meta: Meta,
}

#[derive(Debug)]
pub struct Manifest {
    pub task: TaskId,
    pub provenance: Provenance,
    /// Per-line result, so callers choose between strict and lenient reads.
    pub entries: Vec<Result<ManifestEntry>>,
}

pub fn parse_manifest(text: &str, base: &Path, origin: &str) -> Result<Manifest> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty manifest"))?;
    let fields = header_fields(header, "#manifest", origin)?;
    let task = TaskId::parse(fields.get("task").map_or("tap", String::as_str))?;
    let provenance = Provenance::parse(fields.get("provenance").map_or("imported", String::as_str))?;
    let entries = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| manifest_entry(line, i + 1, task, base, origin))
        .collect();
    Ok(Manifest {
        task,
        provenance,
        entries,
    })
}

fn manifest_entry(line: &str, n: usize, task: TaskId, base: &Path, origin: &str) -> Result<ManifestEntry> {
    let cols: Vec<&str> = line.split(',').collect();
    if cols.len() < 4 {
        return Err(parse_err(origin, n, "expected path,label_kind,label_value,task"));
    }
    if TaskId::parse(cols[3])? != task {
        return Err(parse_err(origin, n, "task differs from manifest header"));
    }
    let mut meta = Meta::new();
    for kv in &cols[4..] {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| parse_err(origin, n, "meta entries must be key=value"))?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(ManifestEntry {
        line: n,
        path: base.join(cols[0]),
        label: parse_label(cols[1], cols[2], &meta, origin, n)?,
        meta,
    })
}

pub fn read_recording(entry: &ManifestEntry) -> Result<Recording> {
    let body = fs::read_to_string(&entry.path).map_err(|e| Error::io(&entry.path, e))?;
    Ok(Recording {
        payload: parse_payload(&body, &entry.path.display().to_string())?,
        label: entry.label,
        meta: entry.meta.clone(),
    })
}

pub fn read_dataset(manifest: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let m = parse_manifest(&text, base, &manifest.display().to_string())?;
    let recordings = m
        .entries
        .into_iter()
        .map(|e| read_recording(&e?))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(recordings, m.task, m.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_train() -> impl Strategy<Value = SpikeTrain> {
        prop::collection::vec((0u64..2_000, 0u32..6, any::<bool>()), 0..60).prop_map(|raw| {
            // space events on a 250 us grid so the 4 kHz bound always holds
            let mut ev: Vec<SpikeEvent> = raw
                .into_iter()
                .map(|(slot, taxel, pos)| {
                    let p = if pos { Polarity::Positive } else { Polarity::Negative };
                    SpikeEvent::new(slot * 250, taxel, p)
                })
                .collect();
            ev.sort_by_key(|e| (e.t, e.taxel));
            ev.dedup_by_key(|e| (e.t, e.taxel));
            let layouts = vec![TaxelLayout::new(2, 3, "left").unwrap()];
            SpikeTrain::new(layouts, ev, 4000.0, 500_000).unwrap()
        })
    }

    proptest! {
        #[test]
        fn events_round_trip(train in arb_train()) {
            let text = events_to_string(&train);
            prop_assert_eq!(parse_events(&text, "mem").unwrap(), train);
        }

        #[test]
        fn analog_round_trip(samples in prop::collection::vec(-1e6f64..1e6, 0..200), rate in 1.0f64..50_000.0) {
            let sig = AnalogSignal::new(samples, rate, "PAC").unwrap();
            let back = parse_analog(&analog_to_string(&sig), "mem").unwrap();
            prop_assert_eq!(back.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            sig.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back, sig);
        }
    }

    #[test]
    fn header_is_required() {
        assert!(parse_events("0,1,1\n", "mem").is_err());
        assert!(parse_events("#nuskin-events v1 rate_hz=4000\n", "mem").is_err());
        assert!(parse_analog("#analog v2 rate_hz=10\n", "mem").is_err());
    }

    #[test]
    fn minimal_header_infers_layout() {
        let t = parse_events("#nuskin-events v1 taxels=80 rate_hz=4000\n10,41,-1\n", "mem").unwrap();
        assert_eq!(t.layouts().len(), 2);
        assert_eq!(t.events()[0].polarity, Polarity::Negative);
    }

    #[test]
    fn dataset_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let l = vec![TaxelLayout::nuskin("left")];
        let recs: Vec<Recording> = (0..3)
            .map(|i| {
                let ev = vec![SpikeEvent::new(i * 250, i as u32, Polarity::Positive)];
                Recording::new(
                    Payload::Spikes(SpikeTrain::new(l.clone(), ev, 4000.0, 300_000).unwrap()),
                    Label::Regression {
                        position_cm: 1.25 * i as f64,
                    },
                )
                .with_meta("tool_length_cm", "20")
                .with_meta("trial", i.to_string())
            })
            .collect();
        let ds = Dataset::new(recs, TaskId::TapLocalization, Provenance::Synthetic).unwrap();
        let manifest = write_dataset(dir.path(), &ds).unwrap();
        let back = read_dataset(&manifest).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.content_hash(), ds.content_hash());
    }
}
