//! Versioned CSV tables and atomic file output.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

pub const CSV_SCHEMA: &str = "# netlod-schema v1";

/// A CSV table with `#` comment lines for provenance and summaries.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    provenance: serde_json::Value,
    notes: Vec<String>,
}

impl CsvTable {
    pub fn new(header: &[&str], provenance: serde_json::Value) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            provenance,
            notes: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    /// Trailing `# key=value ...` line.
    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CSV_SCHEMA}");
        let _ = writeln!(s, "# provenance {}", self.provenance);
        let _ = writeln!(s, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        for n in &self.notes {
            let _ = writeln!(s, "# {}", n.replace('\n', " "));
        }
        s
    }
}

/// Shortest round-trip decimal form, so outputs are byte-stable.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_output(path: &Path, contents: &str) -> anyhow::Result<()> {
    netlod_core::network::write_atomic(path, contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}
