//! Plain-text feature cache.
//!
//! ```text
//! #feature-cache v1 extractor=fft params=<hash> source=<hash> dim=264
//! <recording id>,v0,v1,...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey {
    pub extractor: String,
    pub params: String,
    /// Hash of the data the features were computed from.
    pub source: String,
}

impl CacheKey {
    /// File name unique to the key.
    pub fn file_name(&self) -> String {
        format!("{}-{}-{}.features", self.extractor, self.params, &self.source[..self.source.len().min(16)])
    }
}

pub fn cache_to_string(key: &CacheKey, rows: &[(String, Vec<f64>)]) -> Result<String> {
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut s = format!(
        "#feature-cache v1 extractor={} params={} source={} dim={dim}\n",
        key.extractor, key.params, key.source
    );
    for (id, v) in rows {
        if id.contains([',', '\n']) {
            return Err(Error::InvalidInput(format!("recording id `{id}` not cacheable")));
        }
        if v.len() != dim {
            return Err(Error::InvalidInput("cached rows differ in dimension".into()));
        }
        s.push_str(id);
        for x in v {
            write!(s, ",{x:?}").expect("string write");
        }
        s.push('\n');
    }
    Ok(s)
}

/// Row id and feature values.
pub type CacheRow = (String, Vec<f64>);

/// Parses a cache body. Returns `None` when the header names another key.
pub fn parse_cache(text: &str, key: &CacheKey, origin: &str) -> Result<Option<Vec<CacheRow>>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let bad = |line: usize, reason: String| Error::Parse {
        path: origin.to_string(),
        line,
        reason,
    };
    let mut fields = header.split_whitespace();
    if fields.next() != Some("#feature-cache") || fields.next() != Some("v1") {
        return Err(bad(1, "missing `#feature-cache v1` header".into()));
    }
    let mut found = CacheKey {
        extractor: String::new(),
        params: String::new(),
        source: String::new(),
    };
    let mut dim = None;
    for f in fields {
        match f.split_once('=') {
            Some(("extractor", v)) => found.extractor = v.into(),
            Some(("params", v)) => found.params = v.into(),
            Some(("source", v)) => found.source = v.into(),
            Some(("dim", v)) => dim = Some(v.parse::<usize>().map_err(|e| bad(1, e.to_string()))?),
            _ => return Err(bad(1, format!("unknown header field `{f}`"))),
        }
    }
    if &found != key {
        return Ok(None);
    }
    let dim = dim.ok_or_else(|| bad(1, "missing dim".into()))?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts.next().unwrap_or_default().to_string();
        let v = parts
            .map(|p| p.parse::<f64>().map_err(|e| bad(i + 2, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != dim {
            return Err(bad(i + 2, format!("expected {dim} values, got {}", v.len())));
        }
        rows.push((id, v));
    }
    Ok(Some(rows))
}

pub fn write_cache(path: &Path, key: &CacheKey, rows: &[(String, Vec<f64>)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, cache_to_string(key, rows)?).map_err(|e| Error::io(path, e))
}

/// Reads a cache if present and matching `key`.
pub fn read_cache(path: &Path, key: &CacheKey) -> Result<Option<Vec<CacheRow>>> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_cache(&text, key, &path.display().to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}
