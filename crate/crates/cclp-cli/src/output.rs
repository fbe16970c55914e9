//! Serialization helpers. All floating-point output uses shortest
//! round-trip formatting so that metric files diff cleanly and re-runs
//! are byte-identical.

use std::path::Path;

use cclp::Mat;
use serde::Serialize;

use crate::CliError;

/// Writes pretty-printed JSON plus a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes a CSV file with one header line. Fields are assumed not to
/// need quoting (numeric output only).
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Matrix as nested row arrays, for JSON output.
pub fn mat_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}
