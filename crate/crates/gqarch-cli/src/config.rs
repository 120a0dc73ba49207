//! Flat key = value run configuration.
//!
//! A run reads defaults from an optional `--config` file; explicit
//! command-line flags override file values. Every output file starts with
//! a comment block echoing the fully resolved configuration, and the
//! block parses back into the same mapping, so a result documents how to
//! reproduce itself.

use gqarch::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

/// Resolved settings of one run: the subcommand plus its key/value pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub command: String,
    pub entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(command: impl Into<String>) -> Self {
        RunConfig { command: command.into(), entries: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Bare `key = value` lines, command first; callers prepend their own
    /// comment marker.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut out = vec![format!("command = {}", self.command)];
        out.extend(self.entries.iter().map(|(k, v)| format!("{k} = {v}")));
        out
    }

    /// The same lines as a `#`-prefixed block, ready to prepend to a file.
    pub fn comment_block(&self) -> String {
        self.comment_lines()
            .iter()
            .map(|l| format!("# {l}\n"))
            .collect()
    }

    /// Reads the leading `#` comment block of an output file back into a
    /// config. Returns None when the text does not begin with a block
    /// that names the command.
    pub fn from_comment_block(text: &str) -> Option<RunConfig> {
        let mut command = None;
        let mut entries = BTreeMap::new();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix('#') else { break };
            let rest = rest.trim();
            if rest.is_empty() {
                continue;
            }
            let (key, value) = rest.split_once('=')?;
            let (key, value) = (key.trim(), value.trim());
            if key == "command" {
                command = Some(value.to_string());
            } else {
                entries.insert(key.to_string(), value.to_string());
            }
        }
        Some(RunConfig { command: command?, entries })
    }
}

/// Parses a config file: one `key = value` per line, `#` comments and
/// blank lines ignored, duplicate keys rejected.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "{}:{}: expected key = value, got {raw:?}",
                path.display(),
                i + 1
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "{}:{}: empty key",
                path.display(),
                i + 1
            )));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::InvalidConfig(format!(
                "duplicate key {key:?} in {}",
                path.display()
            )));
        }
    }
    Ok(map)
}

/// Merges file values under command-line flags and records what was used.
///
/// Each key is taken at most once; whatever remains in the file map when
/// [`Resolver::finish`] runs is an unknown key and fails the run, so a
/// typo in a config file cannot silently fall back to a default.
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: RunConfig,
}

impl Resolver {
    pub fn new(command: &str, config_path: Option<&Path>) -> Result<Self> {
        let file = match config_path {
            Some(p) => load_config_file(p)?,
            None => BTreeMap::new(),
        };
        Ok(Resolver { file, resolved: RunConfig::new(command) })
    }

    fn file_value<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: Display,
    {
        match self.file.remove(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                Error::InvalidConfig(format!("config key {key} = {raw:?}: {e}"))
            }),
        }
    }

    /// Flag value if given, else file value, else the default.
    pub fn take<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: std::str::FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => {
                self.file.remove(key);
                v
            }
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.resolved.set(key, &value);
        Ok(value)
    }

    /// Flag value if given, else file value; recorded only when present.
    pub fn take_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: std::str::FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => {
                self.file.remove(key);
                Some(v)
            }
            None => self.file_value(key)?,
        };
        if let Some(v) = &value {
            self.resolved.set(key, v);
        }
        Ok(value)
    }

    /// Like [`Resolver::take_opt`] but the key must come from somewhere.
    pub fn take_required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: std::str::FromStr + Display,
        T::Err: Display,
    {
        self.take_opt(key, flag)?.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{key} is required (pass --{} or set {key} in the config file)",
                key.replace('_', "-")
            ))
        })
    }

    pub fn finish(self) -> Result<RunConfig> {
        if !self.file.is_empty() {
            let keys: Vec<&str> = self.file.keys().map(String::as_str).collect();
            return Err(Error::InvalidConfig(format!(
                "unknown config key(s) for {}: {}",
                self.resolved.command,
                keys.join(", ")
            )));
        }
        Ok(self.resolved)
    }
}
