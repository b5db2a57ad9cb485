//! Flat `key = value` text files used for configs, scenarios and run manifests.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat; the
//! order of entries is preserved so that serialization is deterministic.

use std::fmt::Display;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String, usize)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            entries.push((key.to_string(), v.trim().to_string(), idx + 1));
        }
        Ok(Self { entries })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string(), 0));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    /// Parses `key` if present, reporting the source line on failure.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let Some((_, v, line)) = self.entries.iter().rev().find(|(k, _, _)| k == key) else {
            return Ok(None);
        };
        v.parse::<T>().map(Some).map_err(|e| Error::Parse {
            line: *line,
            message: format!("{key}: {e}"),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .map(|(k, v, _)| (k.as_str(), v.as_str()))
    }

    /// Rejects any key not in `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        for (k, _, line) in &self.entries {
            if !known.contains(&k.as_str()) {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("unknown key {k:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v, _) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
