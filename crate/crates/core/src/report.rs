//! Plain-text structured reports.
//!
//! A report is a list of named sections, each an ordered list of `key = value`
//! lines:
//!
//! ```text
//! [estimate]
//! theta_star = [1.05]
//! objective_value = 0.000412
//!
//! [kernel]
//! family = gaussian
//! ```
//!
//! Floats print in Rust's shortest round-trip form, so equal values always
//! render identically and the text can be parsed back exactly.

use std::fmt::{self, Display, Write as _};
use std::io;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn put_list(&mut self, key: &str, values: &[f64]) -> &mut Self {
        self.put(key, format_list(values))
    }

    pub fn put_opt(&mut self, key: &str, value: Option<impl Display>) -> &mut Self {
        match value {
            Some(v) => self.put(key, v),
            None => self.put(key, "none"),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// `[a, b, c]` with each float in shortest round-trip form.
pub fn format_list(values: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{v}");
    }
    s.push(']');
    s
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a section and returns it for filling.
    pub fn section(&mut self, name: &str) -> &mut Section {
        self.sections.push(Section {
            name: name.to_string(),
            entries: Vec::new(),
        });
        self.sections.last_mut().expect("just pushed")
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.iter().find(|s| s.name == section)?.get(key)
    }

    /// Appends all sections of `other`.
    pub fn extend(&mut self, other: Report) {
        self.sections.extend(other.sections);
    }

    /// Reads back the output of [`Report`]'s `Display` implementation.
    pub fn parse(text: &str) -> Option<Report> {
        let mut report = Report::new();
        for line in text.lines() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                report.section(name);
            } else {
                let (k, v) = line.split_once(" = ")?;
                report.sections.last_mut()?.put(k, v);
            }
        }
        Some(report)
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "[{}]", s.name)?;
            for (k, v) in &s.entries {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

/// Writes `contents` to a temporary sibling of `path` and renames it into
/// place, so `path` never holds a partial file.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents).and_then(|()| std::fs::rename(&tmp, path)).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
