//! Plain-text `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Keys are case sensitive and may appear once.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("unknown key `{key}` on line {line}")]
    UnknownKey { key: String, line: usize },
}

impl ConfigError {
    pub fn value(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Value {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// The offending key, when the error is tied to one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Value { key, .. } | ConfigError::UnknownKey { key, .. } => Some(key),
            ConfigError::Syntax { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed assignments. Lookups mark keys as used so that leftovers can be
/// reported as unknown.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let Some(eq) = content.find('=') else {
                let column = content.len() - content.trim_start().len() + 1;
                return Err(ConfigError::Syntax {
                    line,
                    column,
                    message: "expected `key = value`".into(),
                });
            };
            let key = content[..eq].trim();
            let value = content[eq + 1..].trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    column: 1,
                    message: format!("invalid key `{key}`"),
                });
            }
            if entries.contains_key(key) {
                let column = content.find(key).unwrap_or(0) + 1;
                return Err(ConfigError::Syntax {
                    line,
                    column,
                    message: format!("duplicate key `{key}`"),
                });
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self {
            entries,
            used: Default::default(),
        })
    }

    /// Sets `key`, replacing any value read from the file. Used for
    /// command-line overrides; the entry reports line 0.
    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
    }

    /// Every assignment in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e.value.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Raw value of `key`.
    pub fn raw(&self, key: &str) -> Option<&str> {
        let e = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(&e.value)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError::value(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    /// Overwrites `target` when the key is present.
    pub fn set<T: FromStr>(&self, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<T>()
                    .map_err(|e| ConfigError::value(key, format!("cannot parse `{item}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Comma-separated list of `x y` pairs.
    pub fn points(&self, key: &str) -> Result<Option<Vec<Point2>>, ConfigError> {
        let Some(items) = self.list::<String>(key)? else { return Ok(None) };
        items
            .iter()
            .map(|item| {
                let mut it = item.split_whitespace().map(str::parse::<f64>);
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(x)), Some(Ok(y)), None) if x.is_finite() && y.is_finite() => Ok(Point2::new(x, y)),
                    _ => Err(ConfigError::value(key, format!("expected `x y`, got `{item}`"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Fails on the first key never looked up.
    pub fn reject_unused(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            Some((key, e)) => Err(ConfigError::UnknownKey {
                key: key.clone(),
                line: e.line,
            }),
            None => Ok(()),
        }
    }
}

/// Parses `start:end` into a pair.
pub fn parse_range(key: &str, text: &str) -> Result<(f64, f64), ConfigError> {
    let (a, b) = text
        .trim()
        .split_once(':')
        .ok_or_else(|| ConfigError::value(key, format!("expected `start:end`, got `{text}`")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| ConfigError::value(key, format!("cannot parse `{s}`: {e}")))
    };
    Ok((parse(a)?, parse(b)?))
}
