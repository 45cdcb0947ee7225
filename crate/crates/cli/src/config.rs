//! Flat key=value run configuration: file values are overridden by CLI
//! flags, and every command writes its fully-resolved config (plus the
//! tool version) next to its outputs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use failslow_core::{Error, Result};

/// Parsed contents of a `key = value` config file. `#` starts a comment.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn load(path: &Path) -> Result<ConfigMap> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    i + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigMap { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::Config(format!("config key {key}: cannot parse {raw:?}"))
            }),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

/// CLI flag beats config file beats default.
pub fn resolve<T: FromStr>(
    flag: Option<T>,
    config: &ConfigMap,
    key: &str,
    default: T,
) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(config.get(key)?.unwrap_or(default)),
    }
}

/// Like [`resolve`] but with no default; errors when absent.
pub fn resolve_required<T: FromStr>(
    flag: Option<T>,
    config: &ConfigMap,
    key: &str,
) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => config.get(key)?.ok_or_else(|| {
            Error::Config(format!("missing required parameter: --{} or config key {key}", key.replace('_', "-")))
        }),
    }
}

/// Accumulates the resolved settings a command actually ran with.
#[derive(Debug, Clone, Default)]
pub struct ResolvedConfig {
    entries: BTreeMap<String, String>,
}

impl ResolvedConfig {
    pub fn new(command: &str) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("command".into(), command.into());
        entries.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        ResolvedConfig { entries }
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Writes `run_config.txt` into the output directory.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        std::fs::write(out_dir.join("run_config.txt"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let cfg = ConfigMap::parse("# a comment\nhosts = 4\n\nseed=9 # trailing\n").unwrap();
        assert_eq!(cfg.get::<usize>("hosts").unwrap(), Some(4));
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(cfg.get::<u64>("missing").unwrap(), None);
    }

    #[test]
    fn flag_overrides_config() {
        let cfg = ConfigMap::parse("days = 3").unwrap();
        assert_eq!(resolve(Some(7usize), &cfg, "days", 1).unwrap(), 7);
        assert_eq!(resolve(None::<usize>, &cfg, "days", 1).unwrap(), 3);
        assert_eq!(resolve(None::<usize>, &cfg, "other", 1).unwrap(), 1);
    }

    #[test]
    fn bad_line_is_config_error() {
        assert!(ConfigMap::parse("just words").is_err());
    }
}
