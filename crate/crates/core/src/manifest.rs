//! Flat `key=value` run manifests. The same format is accepted by `--config`, so a
//! manifest written by one run can replay it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

/// Keys that describe the run rather than configure it; ignored on replay.
pub const RESERVED_KEYS: [&str; 3] = ["command", "version", "timestamp"];
/// Prefix of keys computed by the run (e.g. the resolved `ξ`); ignored on replay.
pub const DERIVED_PREFIX: &str = "derived.";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub params: BTreeMap<String, String>,
}

fn check_key(key: &str) -> Result<()> {
    let ok = !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("invalid manifest key `{key}`")))
    }
}

fn check_value(value: &str) -> Result<()> {
    if value.contains(['\n', '\r']) || value.trim() != value {
        return Err(Error::invalid(format!(
            "manifest value `{}` has surrounding whitespace or a line break",
            value.escape_debug()
        )));
    }
    Ok(())
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            params: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        let value = value.to_string();
        check_key(key)?;
        if RESERVED_KEYS.contains(&key) {
            return Err(Error::invalid(format!("`{key}` is reserved")));
        }
        check_value(&value)?;
        self.params.insert(key.to_string(), value);
        Ok(())
    }

    pub fn set_derived(&mut self, key: &str, value: impl ToString) -> Result<()> {
        self.set(&format!("{DERIVED_PREFIX}{key}"), value)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    /// Parameters that act as flags on replay.
    pub fn replay_params(&self) -> impl Iterator<Item = (&str, &str)> {
        self.params
            .iter()
            .filter(|(k, _)| !k.starts_with(DERIVED_PREFIX))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "timestamp={}", self.timestamp);
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Parses manifest or config text. Blank lines and `#` comments are skipped.
    /// `command`, `version` and `timestamp` are optional, so hand-written configs
    /// may hold parameters only.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut m = RunManifest {
            command: String::new(),
            version: String::new(),
            timestamp: 0,
            params: BTreeMap::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            check_key(key).map_err(|e| err(e.to_string()))?;
            match key {
                "command" => m.command = value.to_string(),
                "version" => m.version = value.to_string(),
                "timestamp" => {
                    m.timestamp = value
                        .parse()
                        .map_err(|_| err(format!("bad timestamp `{value}`")))?
                }
                _ => {
                    if m.params.insert(key.to_string(), value.to_string()).is_some() {
                        return Err(err(format!("duplicate key `{key}`")));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
