//! Shared helpers for the plain-text file formats.

use crate::error::{Error, Result};

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(tok: &str, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(format!("{what}: not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(format!("{what}: non-finite value {tok:?}")));
    }
    Ok(v)
}

pub fn parse_usize(tok: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(format!("{what}: not a non-negative integer: {tok:?}")))
}

/// Ordered `key <sep> value` pairs; `#` starts a comment line.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, sep: char) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once(sep).ok_or_else(|| {
                Error::parse(format!("line {}: expected `key {sep} value`", n + 1))
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(KeyValues { entries })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Cursor over the non-empty lines of a text file, for headed formats.
pub struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line_no: 0,
        }
    }

    pub fn next_line(&mut self) -> Option<&'a str> {
        for (n, line) in self.inner.by_ref() {
            self.line_no = n + 1;
            let line = line.trim_end_matches('\r');
            if !line.trim().is_empty() {
                return Some(line);
            }
        }
        None
    }

    pub fn expect_line(&mut self, what: &str) -> Result<&'a str> {
        self.next_line()
            .ok_or_else(|| Error::parse(format!("unexpected end of file, expected {what}")))
    }

    /// Reads a `key v1 v2 ...` line and returns the values.
    pub fn expect_key(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.expect_line(key)?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok(toks.collect()),
            other => Err(Error::parse(format!(
                "line {}: expected `{key}`, found {:?}",
                self.line_no,
                other.unwrap_or("")
            ))),
        }
    }

    pub fn line_no(&self) -> usize {
        self.line_no
    }
}
