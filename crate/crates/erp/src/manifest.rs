//! `key=value` text files: dataset manifests, config files and run echoes.
//!
//! One pair per line, split at the first `=`, both sides trimmed. Blank lines and
//! lines starting with `#` are skipped. Keys are unique. Output is sorted by key,
//! so equal maps serialise to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::dataio::{self, DataError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| DataError::Parse { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, found {line:?}")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(bad("empty key".into()));
            }
            if map.insert(k.to_owned(), v.trim().to_owned()).is_some() {
                return Err(bad(format!("duplicate key {k:?}")));
            }
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&dataio::read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        dataio::write_file(path, self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        self.map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Values are stored trimmed and must fit on one line.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        debug_assert!(!value.contains('\n'), "multi-line value for {key}");
        self.map.insert(key.to_owned(), value.trim().to_owned());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| DataError::Parse {
                    line: 0,
                    msg: format!("bad value {v:?} for {key:?}"),
                })
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
