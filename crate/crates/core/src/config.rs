//! Hyperparameter values and configurations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            ParamValue::Int(i) => Some(i),
            ParamValue::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Some(f as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Token form used by the search-space text format.
    pub fn to_token(&self) -> String {
        match self {
            ParamValue::Bool(b) => b.to_string(),
            ParamValue::Int(i) => i.to_string(),
            ParamValue::Float(f) => format!("{f:?}"),
            ParamValue::Text(s) => format!("{s:?}"),
        }
    }

    /// Parses one token: quoted strings, `true`/`false`, integers, floats;
    /// anything else is taken as bare text.
    pub fn from_token(tok: &str) -> ParamValue {
        if let Some(inner) = tok.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
            return ParamValue::Text(inner.replace("\\\"", "\""));
        }
        match tok {
            "true" | "True" => return ParamValue::Bool(true),
            "false" | "False" => return ParamValue::Bool(false),
            _ => {}
        }
        if let Ok(i) = tok.parse::<i64>() {
            return ParamValue::Int(i);
        }
        if let Ok(f) = tok.parse::<f64>() {
            return ParamValue::Float(f);
        }
        ParamValue::Text(tok.to_string())
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

/// A hyperparameter configuration: parameter name to value.
pub type Config = BTreeMap<String, ParamValue>;

fn bad(key: &str, v: &ParamValue, want: &str) -> Error {
    Error::InvalidArgument(format!("parameter `{key}` = {v} is not {want}"))
}

pub fn get_usize(config: &Config, key: &str, default: usize) -> Result<usize> {
    match config.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_i64()
            .filter(|&i| i >= 0)
            .map(|i| i as usize)
            .ok_or_else(|| bad(key, v, "a non-negative integer")),
    }
}

pub fn get_f64(config: &Config, key: &str, default: f64) -> Result<f64> {
    match config.get(key) {
        None => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| bad(key, v, "a number")),
    }
}

pub fn get_str<'a>(config: &'a Config, key: &str, default: &'a str) -> Result<&'a str> {
    match config.get(key) {
        None => Ok(default),
        Some(v) => v.as_str().ok_or_else(|| bad(key, v, "text")),
    }
}
