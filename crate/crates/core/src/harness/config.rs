//! Flat `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; keys are dotted names and
//! values are taken verbatim after trimming. Lists are comma-separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key `{key}`", no + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("`{key}` = `{v}`: {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<T>()
                            .map_err(|e| Error::Config(format!("`{key}` item `{}`: {e}", s.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Keys not in `known`, for typo detection.
    pub fn unknown_keys<'a>(&'a self, known: &[&str]) -> Vec<&'a str> {
        self.keys().filter(|k| !known.contains(k)).collect()
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let c = Config::parse("# run\nens.size = 16\nens.para.x_range = 0.15, 0.25 # slopes\n\n").unwrap();
        assert_eq!(c.get::<usize>("ens.size").unwrap(), Some(16));
        assert_eq!(c.get_list::<f64>("ens.para.x_range").unwrap(), Some(vec![0.15, 0.25]));
        assert_eq!(c.get::<usize>("missing").unwrap(), None);
    }

    #[test]
    fn nested_prefixes_coexist() {
        let c = Config::parse("ens.init = gauss\nens.init.variance_h = 1.6e-6").unwrap();
        assert_eq!(c.raw("ens.init"), Some("gauss"));
        assert_eq!(c.get::<f64>("ens.init.variance_h").unwrap(), Some(1.6e-6));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("novalue").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("bad key = 1").is_err());
        assert!(Config::parse("x = abc").unwrap().get::<f64>("x").is_err());
    }

    #[test]
    fn display_round_trips() {
        let c = Config::parse("b = 2\na = x, y\n").unwrap();
        assert_eq!(Config::parse(&c.to_string()).unwrap(), c);
    }
}
