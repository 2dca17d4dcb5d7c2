//! The flat `key = value` text dialect shared by manifests and run configs.
//!
//! One entry per line, split at the first `=`, both sides trimmed. Blank lines
//! and lines starting with `#` are ignored. Keys must be unique.

use std::collections::BTreeMap;

use crate::error::{Result, VprError};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvEntries {
    entries: Vec<(String, String)>,
}

impl KvEntries {
    pub fn parse(text: &str, what: &'static str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(VprError::Format {
                    what,
                    line: idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(VprError::Format {
                    what,
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            if entries.iter().any(|(existing, _)| *existing == key) {
                return Err(VprError::Format {
                    what,
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            entries.push((key, v.trim().to_string()));
        }
        Ok(KvEntries { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn to_map(&self) -> BTreeMap<&str, &str> {
        self.iter().collect()
    }
}
