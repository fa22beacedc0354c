//! Line-delimited `key=value` reports.
//!
//! The first two records are always `command` and `digest`; the remaining ones
//! keep insertion order. Values escape `\`, newline and carriage return so that
//! every record is one line.

use std::fmt::{self, Display};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub command: String,
    /// Hex SHA-256 of the canonical problem text, or `-`.
    pub digest: String,
    pub entries: Vec<(String, String)>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("line {0}: missing `=`")]
    NoSeparator(usize),
    #[error("line {0}: bad escape")]
    BadEscape(usize),
    #[error("expected `{0}` record first")]
    Header(&'static str),
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String, ReportError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            _ => return Err(ReportError::BadEscape(line)),
        }
    }
    Ok(out)
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn vector(v: &[f64]) -> String {
    if v.is_empty() {
        return "-".into();
    }
    v.iter().map(|c| num(*c)).collect::<Vec<_>>().join(",")
}

impl Report {
    pub fn new(command: impl Into<String>, digest: impl Into<String>) -> Self {
        Report {
            command: command.into(),
            digest: digest.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        self.entries.push((key, value.to_string()));
    }

    pub fn push_num(&mut self, key: impl Into<String>, v: f64) {
        self.push(key, num(v));
    }

    pub fn push_vec(&mut self, key: impl Into<String>, v: &[f64]) {
        self.push(key, vector(v));
    }

    /// First value recorded under `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_kv(&self) -> String {
        let mut out = format!("command={}\ndigest={}\n", escape(&self.command), escape(&self.digest));
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(&escape(v));
            out.push('\n');
        }
        out
    }

    pub fn parse_kv(text: &str) -> Result<Self, ReportError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (k, v) = line.split_once('=').ok_or(ReportError::NoSeparator(i + 1))?;
            records.push((k.to_string(), unescape(v, i + 1)?));
        }
        let mut it = records.into_iter();
        let command = match it.next() {
            Some((k, v)) if k == "command" => v,
            _ => return Err(ReportError::Header("command")),
        };
        let digest = match it.next() {
            Some((k, v)) if k == "digest" => v,
            _ => return Err(ReportError::Header("digest")),
        };
        Ok(Report {
            command,
            digest,
            entries: it.collect(),
        })
    }

    /// Aligned `key : value` lines for reading.
    pub fn to_text(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|(k, _)| k.len())
            .chain([7])
            .max()
            .unwrap_or(7);
        let mut out = format!("{:width$} : {}\n{:width$} : {}\n", "command", self.command, "digest", self.digest);
        for (k, v) in &self.entries {
            let mut lines = v.lines();
            out.push_str(&format!("{:width$} : {}\n", k, lines.next().unwrap_or("")));
            for rest in lines {
                out.push_str(&format!("{:width$}   {}\n", "", rest));
            }
        }
        out
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut r = Report::new("envelope ex51.blp --point 0,-1", "ab12");
        r.push_num("v_gamma", -1.0);
        r.push_num("tiny", 1e-300 / 3.0);
        r.push_vec("w", &[0.1, -2.0 / 3.0]);
        r.push("note", "two\nlines with \\ and = signs");
        r.push("empty", "");
        let back = Report::parse_kv(&r.to_kv()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("w"), Some("0.1,-0.6666666666666666"));
        assert_eq!(back.get("tiny").unwrap().parse::<f64>().unwrap(), 1e-300 / 3.0);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(Report::parse_kv("digest=x\n"), Err(ReportError::Header("command")));
        assert_eq!(Report::parse_kv("command=a\ndigest=b\nnoeq\n"), Err(ReportError::NoSeparator(3)));
        assert_eq!(Report::parse_kv("command=a\ndigest=b\nk=\\q\n"), Err(ReportError::BadEscape(3)));
    }

    #[test]
    fn text_form_lists_every_entry() {
        let mut r = Report::new("cq", "-");
        r.push("verdict", "holds");
        r.push("note", "a\nb");
        let t = r.to_text();
        assert!(t.contains("verdict : holds"));
        assert!(t.lines().any(|l| l.trim() == "b"));
    }
}
