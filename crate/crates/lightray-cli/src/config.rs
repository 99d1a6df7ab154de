//! INI-style experiment configuration: `[section]` headers and
//! `key = value` lines, `#` or `;` comments. Command-line `--set
//! section.key=value` pairs override file values.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {}: unterminated section header", lineno + 1))?;
                section = name.trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
            } else if let Some((key, value)) = line.split_once('=') {
                cfg.sections
                    .entry(section.clone())
                    .or_default()
                    .insert(key.trim().to_string(), value.trim().to_string());
            } else {
                bail!("line {}: expected `key = value` or `[section]`", lineno + 1);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("while parsing {}", path.display()))
    }

    /// Apply a `section.key=value` override.
    pub fn set(&mut self, spec: &str) -> Result<()> {
        let (addr, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{spec}` is not of the form section.key=value"))?;
        let (section, key) = addr
            .split_once('.')
            .ok_or_else(|| anyhow!("override `{spec}` is not of the form section.key=value"))?;
        self.sections
            .entry(section.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|v| v.as_str())
    }

    pub fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.get(section, key).unwrap_or(default)
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("{section}.{key} = `{v}` is not a number")),
        }
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("{section}.{key} = `{v}` is not an integer")),
        }
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("{section}.{key} = `{v}` is not an integer")),
        }
    }

    pub fn f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse()
                        .with_context(|| format!("{section}.{key}: `{c}` is not a number"))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    pub fn f64_list_or(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        Ok(self.f64_list(section, key)?.unwrap_or_else(|| default.to_vec()))
    }

    pub fn usize_list_or(&self, section: &str, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse()
                        .with_context(|| format!("{section}.{key}: `{c}` is not an integer"))
                })
                .collect(),
        }
    }

    pub fn str_list_or(&self, section: &str, key: &str, default: &[&str]) -> Vec<String> {
        match self.get(section, key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => v
                .split(',')
                .map(|c| c.trim().to_string())
                .filter(|c| !c.is_empty())
                .collect(),
        }
    }

    /// Deterministic flat echo of every key, for the manifest.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (section, keys) in &self.sections {
            for (key, value) in keys {
                out.push_str(&format!("{section}.{key} = {value}\n"));
            }
        }
        out
    }
}
