//! Line-oriented `key=value` text: `#` starts a comment, blank lines are
//! ignored, keys are unique.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, IoContext, Result};

pub type Pairs = BTreeMap<String, String>;

pub fn parse_kv(text: &str) -> Result<Pairs> {
    let mut pairs = Pairs::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key=value", i + 1)));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if pairs.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(pairs)
}

pub fn read_kv(path: &Path) -> Result<Pairs> {
    parse_kv(&std::fs::read_to_string(path).at(path)?)
}

pub fn format_kv(pairs: &Pairs) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

pub fn write_kv(path: &Path, pairs: &Pairs) -> Result<()> {
    std::fs::write(path, format_kv(pairs)).at(path)
}
