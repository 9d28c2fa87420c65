//! Flat `key = value` text with dotted section prefixes.
//!
//! ```text
//! # comment
//! task = tap
//! feature.kind = fft
//! model.family = svr-rbf
//! protocol.k = 5
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type KvMap = BTreeMap<String, String>;

pub fn parse_kv(text: &str, origin: &str) -> Result<KvMap> {
    let mut map = KvMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            reason,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(bad(format!("invalid key `{k}`")));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("duplicate key `{k}`")));
        }
    }
    Ok(map)
}

/// One `key = value` line per entry in key order.
pub fn kv_to_string(map: &KvMap) -> String {
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Consumes keys from a map; leftovers are reported as unknown.
pub struct KvReader {
    map: KvMap,
}

impl KvReader {
    pub fn new(map: KvMap) -> Self {
        KvReader { map }
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Config {
                key: key.to_string(),
                reason: format!("cannot parse `{v}` as {}", std::any::type_name::<T>()),
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.map.remove(key).as_deref() {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(Error::Config {
                key: key.to_string(),
                reason: format!("expected true or false, got `{v}`"),
            }),
        }
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((key, _)) => Err(Error::Config {
                key,
                reason: "unknown key".into(),
            }),
        }
    }
}
