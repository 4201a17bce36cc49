//! Sectioned `key = value` text configuration.
//!
//! ```text
//! # comment
//! [model]
//! variant = muse
//! top_hidden = 128, 128
//! ```
//!
//! Keys are addressed as `section.key`. Every lookup is recorded together
//! with the value actually used (explicit or default), so a run can echo its
//! effective configuration and flag keys nobody read.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    used: RefCell<BTreeSet<(String, String)>>,
    effective: RefCell<BTreeMap<String, BTreeMap<String, String>>>,
}

fn full_key(section: &str, key: &str) -> String {
    format!("{section}.{key}")
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        Error::config(format!("line {}", n + 1), "unterminated section header")
                    })?
                    .trim();
                if name.is_empty() {
                    return Err(Error::config(
                        format!("line {}", n + 1),
                        "empty section name",
                    ));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", n + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::config(format!("line {}", n + 1), "empty key"));
            }
            if section.is_empty() {
                return Err(Error::config(k, "key outside of any [section]"));
            }
            let prev = cfg
                .sections
                .entry(section.clone())
                .or_default()
                .insert(k.to_string(), v.trim().to_string());
            if prev.is_some() {
                return Err(Error::config(full_key(&section, k), "duplicate key"));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Set (or override) a value.
    pub fn set(&mut self, section: &str, key: &str, value: impl Display) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.sections
            .get(section)
            .is_some_and(|s| s.contains_key(key))
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    /// Section names starting with `prefix`.
    pub fn sections_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.sections
            .keys()
            .filter(|s| s.starts_with(prefix))
            .cloned()
            .collect()
    }

    fn record(&self, section: &str, key: &str, value: &str) {
        self.used
            .borrow_mut()
            .insert((section.to_string(), key.to_string()));
        self.effective
            .borrow_mut()
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<String> {
        let v = self.sections.get(section)?.get(key)?.clone();
        self.record(section, key, &v);
        Some(v)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.get_str(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| {
                Error::config(full_key(section, key), format!("cannot parse `{v}`: {e}"))
            }),
        }
    }

    pub fn get_or<T: FromStr + Display>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.get(section, key)? {
            Some(v) => Ok(v),
            None => {
                self.record(section, key, &default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(section, key)?
            .ok_or_else(|| Error::config(full_key(section, key), "required key is missing"))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn get_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(v) = self.get_str(section, key) else {
            return Ok(None);
        };
        parse_list(&v)
            .map(Some)
            .map_err(|d| Error::config(full_key(section, key), d))
    }

    pub fn require_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.get_list(section, key)?
            .ok_or_else(|| Error::config(full_key(section, key), "required key is missing"))
    }

    pub fn get_list_or<T: FromStr + Display>(
        &self,
        section: &str,
        key: &str,
        default: Vec<T>,
    ) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        match self.get_list(section, key)? {
            Some(v) => Ok(v),
            None => {
                self.record(section, key, &join_list(&default));
                Ok(default)
            }
        }
    }

    /// Keys present in the text that no lookup touched, as `section.key`.
    pub fn unused_keys(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.sections
            .iter()
            .flat_map(|(s, kv)| kv.keys().map(move |k| (s, k)))
            .filter(|(s, k)| !used.contains(&((*s).clone(), (*k).clone())))
            .map(|(s, k)| full_key(s, k))
            .collect()
    }

    /// Error on the first unread key.
    pub fn ensure_all_used(&self) -> Result<()> {
        match self.unused_keys().first() {
            Some(k) => Err(Error::config(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }

    /// All keys as written.
    pub fn to_text(&self) -> String {
        render(&self.sections)
    }

    /// Every key that was looked up, with the value in force.
    pub fn effective_text(&self) -> String {
        render(&self.effective.borrow())
    }
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<T>()
                .map_err(|e| format!("cannot parse list item `{p}`: {e}"))
        })
        .collect()
}

pub fn join_list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn render(sections: &BTreeMap<String, BTreeMap<String, String>>) -> String {
    let mut out = String::new();
    for (s, kv) in sections {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("[{s}]\n"));
        for (k, v) in kv {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}
