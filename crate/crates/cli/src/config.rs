//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! consumed by the subcommand; leftovers are reported as unknown.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    source: String,
}

impl Config {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(CliError::config(source, line, format!("expected `key = value`, found `{trimmed}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(CliError::config(source, line, "empty key or value"));
            }
            if let Some(prev) = entries.insert(key.to_string(), Entry { value: value.to_string(), line }) {
                return Err(CliError::config(source, line, format!("duplicate key `{key}` (first on line {})", prev.line)));
            }
        }
        Ok(Self { entries, source: source.to_string() })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    fn take_raw(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn parse_value<T: FromStr>(&self, key: &str, e: &Entry) -> Result<T, CliError> {
        e.value
            .parse()
            .map_err(|_| CliError::config(&self.source, e.line, format!("invalid value `{}` for `{key}`", e.value)))
    }

    pub fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.take_raw(key) {
            None => Ok(default),
            Some(e) => self.parse_value(key, &e),
        }
    }

    pub fn get_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.take_raw(key) {
            None => Ok(None),
            Some(e) => self.parse_value(key, &e).map(Some),
        }
    }

    /// Comma-separated list; `none` is the empty list.
    pub fn get_list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
        match self.take_raw(key) {
            None => Ok(default),
            Some(e) if e.value == "none" => Ok(Vec::new()),
            Some(e) => e
                .value
                .split(',')
                .map(str::trim)
                .map(|s| {
                    s.parse().map_err(|_| CliError::config(&self.source, e.line, format!("invalid list entry `{s}` for `{key}`")))
                })
                .collect(),
        }
    }

    /// One of `choices`.
    pub fn get_choice(&mut self, key: &str, choices: &[&str], default: &str) -> Result<String, CliError> {
        match self.take_raw(key) {
            None => Ok(default.to_string()),
            Some(e) if choices.contains(&e.value.as_str()) => Ok(e.value),
            Some(e) => Err(CliError::config(
                &self.source,
                e.line,
                format!("`{key}` must be one of {}, found `{}`", choices.join(", "), e.value),
            )),
        }
    }

    /// Errors on any key no accessor consumed.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.iter().min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some((k, e)) => Err(CliError::config(&self.source, e.line, format!("unknown key `{k}`"))),
        }
    }
}
