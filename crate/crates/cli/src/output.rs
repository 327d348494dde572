use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// A command's result, rendered as pretty JSON or as a CSV table.
pub enum Artifact {
    Json(serde_json::Value),
    Csv(Table),
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip decimal form; never uses exponents or separators.
pub fn num(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v}").unwrap();
    s
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn json<T: Serialize>(value: &T) -> Result<Artifact, CliError> {
    serde_json::to_value(value)
        .map(Artifact::Json)
        .map_err(|e| CliError::Output(format!("serializing output: {e}")))
}

impl Artifact {
    pub fn render(&self) -> String {
        match self {
            Artifact::Json(v) => {
                let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
                s.push('\n');
                s
            }
            Artifact::Csv(t) => t.render(),
        }
    }
}

/// Writes to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
