//! Flat `key = value` files with `#` comments.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    /// Rejects lines without `=`, empty keys, keys outside `allowed` and
    /// repeated keys.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Parse(format!("line {lineno}: expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Parse(format!("line {lineno}: empty key")));
            }
            if !allowed.contains(&key) {
                return Err(CliError::Parse(format!(
                    "line {lineno}: unknown key `{key}` (expected one of: {})",
                    allowed.join(", ")
                )));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::Parse(format!("line {lineno}: key `{key}` given twice")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some("") => Ok(Vec::new()),
            Some(v) => v.split(',').map(|item| parse_value(key, item.trim())).collect(),
        }
    }
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Parse(format!("`{key}`: cannot parse `{value}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_lists() {
        let kv = KeyValues::parse("# header\n\na = 1.5  # trailing\nb = 0.1, 0.2,0.3\n", &["a", "b"]).unwrap();
        assert_eq!(kv.get::<f64>("a").unwrap(), Some(1.5));
        assert_eq!(kv.list::<f64>("b").unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn malformed_input_is_a_parse_error() {
        for text in ["a 1", "= 3", "zzz = 1", "a = 1\na = 2"] {
            let err = KeyValues::parse(text, &["a"]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
        let kv = KeyValues::parse("a = x", &["a"]).unwrap();
        assert_eq!(kv.get::<f64>("a").unwrap_err().exit_code(), 2);
    }
}
