//! Flat `key = value` configuration files and `--param` overrides.
//!
//! One assignment per line, `#` starts a comment, strings are double-quoted and
//! numbers are plain. Command-line overrides may also use bare words for strings.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("parameter `{key}` given twice")]
    Duplicate { key: String },
    #[error("unknown parameter `{key}` (expected one of: {allowed})")]
    UnknownKey { key: String, allowed: String },
    #[error("parameter `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

/// An ordered set of named values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    entries: BTreeMap<String, Value>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a configuration file body.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut params = Params::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| ConfigError::Syntax {
                line: i + 1,
                message: message.to_string(),
            };
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let key = parse_key(key).map_err(|m| syntax(&m))?;
            let value = parse_value(value.trim(), false).map_err(|m| syntax(&m))?;
            if params.entries.contains_key(&key) {
                return Err(ConfigError::Duplicate { key });
            }
            params.entries.insert(key, value);
        }
        Ok(params)
    }

    /// Parses `key=value` strings from the command line; later entries win.
    pub fn from_overrides<S: AsRef<str>>(items: &[S]) -> Result<Self, ConfigError> {
        let mut params = Params::new();
        for item in items {
            let item = item.as_ref();
            let (key, value) = item.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                message: format!("override `{item}` is not of the form key=value"),
            })?;
            let key = parse_key(key).map_err(|message| ConfigError::Syntax { line: 0, message })?;
            let value = parse_value(value.trim(), true).map_err(|message| ConfigError::Invalid {
                key: key.clone(),
                message,
            })?;
            params.entries.insert(key, value);
        }
        Ok(params)
    }

    /// `self` overlaid with `other`.
    pub fn merged(&self, other: &Params) -> Params {
        let mut out = self.clone();
        for (k, v) in &other.entries {
            out.entries.insert(k.clone(), v.clone());
        }
        out
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rejects keys outside `allowed`.
    pub fn check_known(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    key: key.clone(),
                    allowed: allowed.join(", "),
                });
            }
        }
        Ok(())
    }

    pub fn number(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(Value::Number(x)) if x.is_finite() => Ok(*x),
            Some(Value::Number(x)) => Err(invalid(key, format!("{x} is not finite"))),
            Some(Value::Text(s)) => Err(invalid(key, format!("expected a number, got \"{s}\""))),
        }
    }

    /// An integer in `lo..=hi`.
    pub fn integer(&self, key: &str, default: i64, lo: i64, hi: i64) -> Result<i64, ConfigError> {
        let x = self.number(key, default as f64)?;
        if x.fract() != 0.0 {
            return Err(invalid(key, format!("expected an integer, got {x}")));
        }
        if x < lo as f64 || x > hi as f64 {
            return Err(invalid(key, format!("{x} is outside {lo}..={hi}")));
        }
        Ok(x as i64)
    }

    pub fn count(&self, key: &str, default: usize, lo: usize, hi: usize) -> Result<usize, ConfigError> {
        self.integer(key, default as i64, lo as i64, hi as i64).map(|x| x as usize)
    }

    /// A number in the closed range `lo..=hi`.
    pub fn real(&self, key: &str, default: f64, lo: f64, hi: f64) -> Result<f64, ConfigError> {
        let x = self.number(key, default)?;
        if x < lo || x > hi {
            return Err(invalid(key, format!("{x} is outside [{lo}, {hi}]")));
        }
        Ok(x)
    }

    /// One of the `choices`.
    pub fn choice(&self, key: &str, default: &str, choices: &[&str]) -> Result<String, ConfigError> {
        let s = match self.entries.get(key) {
            None => return Ok(default.to_string()),
            Some(Value::Text(s)) => s.clone(),
            Some(Value::Number(x)) => return Err(invalid(key, format!("expected text, got {x}"))),
        };
        if choices.contains(&s.as_str()) {
            Ok(s)
        } else {
            Err(invalid(key, format!("\"{s}\" is not one of {}", choices.join(", "))))
        }
    }
}

fn invalid(key: &str, message: String) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message,
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_key(key: &str) -> Result<String, String> {
    let key = key.trim();
    let ok = !key.is_empty()
        && key.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(key.to_string())
    } else {
        Err(format!("invalid key `{key}`"))
    }
}

fn parse_value(value: &str, bare_words: bool) -> Result<Value, String> {
    if value.is_empty() {
        return Err("missing value".to_string());
    }
    if let Some(rest) = value.strip_prefix('"') {
        let inner = rest.strip_suffix('"').ok_or("unterminated string")?;
        if inner.contains('"') {
            return Err("stray quote inside string".to_string());
        }
        return Ok(Value::Text(inner.to_string()));
    }
    if let Ok(x) = value.parse::<f64>() {
        return Ok(Value::Number(x));
    }
    if bare_words {
        Ok(Value::Text(value.to_string()))
    } else {
        Err(format!("`{value}` is neither a number nor a quoted string"))
    }
}
