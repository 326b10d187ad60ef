//! Tabular results with provenance headers, persisted as CSV.

use super::CliError;
use std::io::Write;
use std::path::Path;

/// Rectangular table of reals with named columns and a provenance header
/// that is written out as leading `#` comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub provenance: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width {} does not match {} columns",
            row.len(),
            self.columns.len()
        );
        self.rows.push(row);
    }

    pub fn add_provenance(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.provenance.push((key.into(), value.into()));
    }

    /// Renders the full CSV: provenance comments, header, then rows with 12
    /// significant digits. Byte-identical across runs for identical content.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.provenance {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.11e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let rendered = self.render();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| CliError::Io {
                    path: parent.display().to_string(),
                    message: e.to_string(),
                })?;
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        file.write_all(rendered.as_bytes()).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Reads back a CSV written by [`ResultTable::write_csv`]; used by tests and
/// downstream tooling that wants to re-ingest results.
pub fn read_csv(path: &Path) -> Result<ResultTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut provenance = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                provenance.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if columns.is_none() {
            columns = Some(line.split(',').map(|s| s.to_string()).collect());
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.parse::<f64>()).collect();
        rows.push(row.map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: format!("unparsable row: {e}"),
        })?);
    }
    let columns = columns.ok_or_else(|| CliError::Io {
        path: path.display().to_string(),
        message: "missing header row".into(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ResultTable {
        name,
        columns,
        rows,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_renders_header_and_provenance_only() {
        let mut t = ResultTable::new("empty", vec!["time".into(), "value".into()]);
        t.add_provenance("study", "fidelity");
        let rendered = t.render();
        assert_eq!(rendered, "# study = fidelity\ntime,value\n");
    }

    #[test]
    fn round_trip_preserves_values() {
        let dir = std::env::temp_dir().join("cvteleport_table_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.csv");
        let mut t = ResultTable::new("round_trip", vec!["a".into(), "b".into()]);
        t.add_provenance("key", "value");
        t.push_row(vec![1.0 / 3.0, 2.0f64.sqrt()]);
        t.push_row(vec![-0.5, 6.62607015e-34]);
        t.write_csv(&path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.columns, t.columns);
        for (r1, r2) in t.rows.iter().zip(back.rows.iter()) {
            for (a, b) in r1.iter().zip(r2.iter()) {
                let rel = if *a == 0.0 {
                    (a - b).abs()
                } else {
                    ((a - b) / a).abs()
                };
                assert!(rel < 1e-11, "{a} vs {b}");
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn render_is_deterministic() {
        let mut t = ResultTable::new("det", vec!["x".into()]);
        t.add_provenance("config_hash", "abc");
        t.push_row(vec![0.1 + 0.2]);
        assert_eq!(t.render(), t.render());
    }
}
