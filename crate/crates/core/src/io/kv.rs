//! Flat sectioned key-value text, the format of config, model, and
//! summary files.
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Values are kept as raw strings; typed access goes through the
//! parsing helpers, which name the section, key, and line in every
//! error. Lists are space-separated.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct KvSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<KvEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct KvDoc {
    pub sections: Vec<KvSection>,
}

impl KvDoc {
    /// Parses a document, collecting every syntax problem instead of
    /// stopping at the first.
    pub fn parse(text: &str) -> Result<KvDoc> {
        let mut doc = KvDoc::default();
        let mut problems: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[') {
                match name.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => {
                        let name = name.trim().to_string();
                        if doc.sections.iter().any(|s| s.name == name) {
                            problems.push(format!("line {line}: duplicate section [{name}]"));
                        }
                        doc.sections.push(KvSection { name, line, entries: Vec::new() });
                    }
                    _ => problems.push(format!("line {line}: malformed section header '{trimmed}'")),
                }
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                problems.push(format!("line {line}: expected 'key = value', got '{trimmed}'"));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                problems.push(format!("line {line}: empty key"));
                continue;
            }
            match doc.sections.last_mut() {
                None => problems.push(format!("line {line}: key '{key}' appears before any section")),
                Some(sec) => {
                    if sec.entries.iter().any(|e| e.key == key) {
                        problems.push(format!(
                            "line {line}: duplicate key '{key}' in [{}]",
                            sec.name
                        ));
                    }
                    sec.entries.push(KvEntry { key, value, line });
                }
            }
        }
        if problems.is_empty() {
            Ok(doc)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn section(&self, name: &str) -> Option<&KvSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&KvSection> {
        self.section(name)
            .ok_or_else(|| Error::Config(format!("missing section [{name}]")))
    }
}

impl KvSection {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    fn entry(&self, key: &str) -> Result<&KvEntry> {
        self.entries.iter().find(|e| e.key == key).ok_or_else(|| {
            Error::Config(format!("missing key '{key}' in [{}]", self.name))
        })
    }

    /// Required typed value.
    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let e = self.entry(key)?;
        e.value.parse().map_err(|_| {
            Error::Config(format!(
                "line {}: cannot parse '{}' for {}.{key}",
                e.line, e.value, self.name
            ))
        })
    }

    /// Typed value with a default for an absent key.
    pub fn parsed_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.parsed(key),
        }
    }

    /// Required space-separated list of floats.
    pub fn float_list(&self, key: &str) -> Result<Vec<f64>> {
        let e = self.entry(key)?;
        e.value
            .split_whitespace()
            .map(|tok| {
                tok.parse().map_err(|_| {
                    Error::Config(format!(
                        "line {}: cannot parse '{tok}' in list {}.{key}",
                        e.line, self.name
                    ))
                })
            })
            .collect()
    }
}

/// Serializes sections in the given order; values print verbatim.
pub fn write_kv<W: Write>(mut w: W, sections: &[(&str, Vec<(&str, String)>)]) -> Result<()> {
    for (i, (name, entries)) in sections.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        writeln!(w, "[{name}]")?;
        for (key, value) in entries {
            writeln!(w, "{key} = {value}")?;
        }
    }
    Ok(())
}

/// Space-separated list formatting for [`KvSection::float_list`].
pub fn format_float_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}
