//! Flat `key = value` text files used for parameters, profiles and reports.
//!
//! Lines starting with `#` are comments. Keys keep insertion order so that
//! written files are byte-stable.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Parse { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: Vec<(String, String)>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut map = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if map.get(k).is_some() {
                return Err(KvError::Duplicate(k.to_string()));
            }
            map.entries.push((k.to_string(), v.to_string()));
        }
        Ok(map)
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, KvError> {
        let value = self.require(key)?;
        value.parse().map_err(|_| KvError::Parse {
            key: key.to_string(),
            value: value.to_string(),
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64, KvError> {
        self.parsed(key)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, KvError> {
        match self.get(key) {
            Some(_) => self.f64(key),
            None => Ok(default),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn extend(&mut self, other: &KvMap) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    pub fn render(&self, header: &str) -> String {
        let mut out = String::new();
        for line in header.lines() {
            out.push_str(line);
            out.push('\n');
        }
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

pub fn read_file(path: impl AsRef<Path>) -> Result<KvMap, KvError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| KvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    KvMap::parse(&text)
}

pub fn write_file(path: impl AsRef<Path>, header: &str, map: &KvMap) -> Result<(), KvError> {
    let path = path.as_ref();
    fs::write(path, map.render(header)).map_err(|source| KvError::Io {
        path: path.to_path_buf(),
        source,
    })
}
