//! Dataset import adapters.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::io::{parse_manifest, read_recording, MANIFEST_NAME};
use crate::model::Dataset;

pub const IMPORT_LOG: &str = "import.log";

#[derive(Debug)]
pub struct Imported {
    pub dataset: Dataset,
    /// `(path or manifest line, reason)` for everything left out.
    pub skipped: Vec<(String, String)>,
}

pub trait Adapter {
    fn id(&self) -> &'static str;
    /// Human-readable description of the source layout the adapter accepts.
    fn expected_layout(&self) -> &'static str;
    fn import(&self, source: &Path) -> Result<Imported>;
}

/// Directories already in this crate's manifest + recording formats.
///
/// The published layout of the original hardware recordings is not
/// documented; a dedicated adapter maps it onto these formats once the
/// files are at hand.
pub struct Canonical;

impl Adapter for Canonical {
    fn id(&self) -> &'static str {
        "canonical"
    }

    fn expected_layout(&self) -> &'static str {
        "<source>/manifest.csv with a `#manifest v1 task=<task> provenance=<p>` header and \
         `path,label_kind,label_value,task,meta...` lines naming `#nuskin-events v1` or `#analog v1` files"
    }

    fn import(&self, source: &Path) -> Result<Imported> {
        let manifest = source.join(MANIFEST_NAME);
        if !manifest.is_file() {
            return Err(Error::Adapter(format!(
                "{} is not a canonical dataset: missing {MANIFEST_NAME}; expected {}",
                source.display(),
                self.expected_layout()
            )));
        }
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let m = parse_manifest(&text, source, &manifest.display().to_string())?;
        let mut skipped = Vec::new();
        let mut recordings = Vec::new();
        let mut referenced = BTreeSet::new();
        for (i, entry) in m.entries.into_iter().enumerate() {
            let e = match entry {
                Ok(e) => e,
                Err(err) => {
                    skipped.push((format!("{MANIFEST_NAME} entry {}", i + 1), err.to_string()));
                    continue;
                }
            };
            referenced.insert(e.path.clone());
            match read_recording(&e) {
                Ok(r) => recordings.push(r),
                Err(err) => skipped.push((e.path.display().to_string(), err.to_string())),
            }
        }
        for f in files_under(source)? {
            let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if f.parent() == Some(source) && (name == MANIFEST_NAME || name == IMPORT_LOG) {
                continue;
            }
            if !referenced.contains(&f) {
                skipped.push((f.display().to_string(), "not referenced by the manifest".into()));
            }
        }
        if recordings.is_empty() {
            return Err(Error::Adapter(format!("no importable recordings under {}", source.display())));
        }
        Ok(Imported {
            dataset: Dataset::new(recordings, m.task, m.provenance)?,
            skipped,
        })
    }
}

fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = e.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn adapters() -> Vec<Box<dyn Adapter>> {
    vec![Box::new(Canonical)]
}

pub fn adapter(id: &str) -> Result<Box<dyn Adapter>> {
    adapters().into_iter().find(|a| a.id() == id).ok_or_else(|| {
        let known: Vec<String> = adapters()
            .iter()
            .map(|a| format!("{} ({})", a.id(), a.expected_layout()))
            .collect();
        Error::Adapter(format!("unknown adapter `{id}`; registered: {}", known.join("; ")))
    })
}

pub fn import_log(imported: &Imported) -> String {
    let mut s = format!("imported {}\n", imported.dataset.len());
    for (what, why) in &imported.skipped {
        s.push_str(&format!("skipped {what}: {why}\n"));
    }
    s
}
