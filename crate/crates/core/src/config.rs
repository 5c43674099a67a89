//! Flat `section.key: value` configuration files.
//!
//! One file carries the motion controller, navigation loop, noise, camera and
//! launcher settings. Lines look like
//!
//! ```text
//! # comment
//! discrete_move.linear_velocity: 0.15
//! vsn.max_steps: 80
//! remap: /mobile_base/commands/velocity /cmd_vel
//! ```
//!
//! A line `section:` with no value opens a block whose indented lines belong
//! to that section, so YAML-style files with one level of nesting also parse.
//! Keys without a section are looked up as a fallback for every section.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key: value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: remap needs exactly two names")]
    BadRemap { line: usize },
    #[error("{key}: invalid value {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
    remaps: Vec<(String, String)>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = FlatConfig::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let without_comment = raw.split('#').next().unwrap_or("");
            if without_comment.trim().is_empty() {
                continue;
            }
            let indented = without_comment.starts_with(' ') || without_comment.starts_with('\t');
            let line = without_comment.trim();
            let Some((key, value)) = line.split_once(':') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: raw.to_string(),
                });
            }
            if key == "remap" {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(ConfigError::BadRemap { line: line_no });
                }
                cfg.remaps.push((parts[0].to_string(), parts[1].to_string()));
                continue;
            }
            if value.is_empty() {
                section = Some(key.to_string());
                continue;
            }
            let full = match (&section, indented) {
                (Some(s), true) => format!("{s}.{key}"),
                _ => {
                    section = None;
                    key.to_string()
                }
            };
            cfg.entries.insert(full, value.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn remaps(&self) -> &[(String, String)] {
        &self.remaps
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Raw value of `section.key`, falling back to a bare `key`.
    pub fn get(&self, section: &str, key: &str) -> Option<(&str, String)> {
        let full = format!("{section}.{key}");
        if let Some(v) = self.entries.get(&full) {
            return Some((v.as_str(), full));
        }
        self.entries.get(key).map(|v| (v.as_str(), key.to_string()))
    }

    pub fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, full)) => v.parse::<T>().map(Some).map_err(|e| ConfigError::BadValue {
                key: full,
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn bad_value(&self, section: &str, key: &str, reason: &str) -> ConfigError {
        let (value, key) = self
            .get(section, key)
            .map(|(v, k)| (v.to_string(), k))
            .unwrap_or_else(|| (String::new(), format!("{section}.{key}")));
        ConfigError::BadValue {
            key,
            value,
            reason: reason.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_nested_forms() {
        let text = "\
# motion
discrete_move.linear_velocity: 0.15
vsn:
  max_steps: 80
  target: chair
remap: /a /b
timeout_s: 12
";
        let c = FlatConfig::parse(text).unwrap();
        assert_eq!(c.parsed::<f64>("discrete_move", "linear_velocity").unwrap(), Some(0.15));
        assert_eq!(c.parsed::<usize>("vsn", "max_steps").unwrap(), Some(80));
        assert_eq!(c.get("vsn", "target").unwrap().0, "chair");
        assert_eq!(c.parsed::<f64>("discrete_move", "timeout_s").unwrap(), Some(12.0));
        assert_eq!(c.remaps(), &[("/a".to_string(), "/b".to_string())]);
    }

    #[test]
    fn errors() {
        assert!(matches!(FlatConfig::parse("nonsense"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(FlatConfig::parse("remap: /a"), Err(ConfigError::BadRemap { .. })));
        let c = FlatConfig::parse("vsn.max_steps: many").unwrap();
        let e = c.parsed::<usize>("vsn", "max_steps").unwrap_err();
        assert!(e.to_string().contains("vsn.max_steps"));
    }

    #[test]
    fn empty_file() {
        let c = FlatConfig::parse("").unwrap();
        assert!(c.get("vsn", "target").is_none());
    }
}
