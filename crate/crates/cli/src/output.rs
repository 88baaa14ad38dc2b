//! Writing the JSON report document and the CSV convergence table.

use std::fs;
use std::path::Path;

use finsler_core::report;
use serde_json::Value;

use crate::commands::Table;
use crate::error::CliError;

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Deterministic JSON: sorted keys, fixed float formatting.
pub fn write_json(path: &Path, doc: &Value) -> Result<(), CliError> {
    let mut text = report::to_json(doc);
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e.into()))?;
    let flush = |w: &mut csv::Writer<fs::File>| -> csv::Result<()> {
        w.write_record(&table.header)?;
        for row in &table.rows {
            let cells = row.iter().enumerate().map(|(k, v)| match k {
                0 => format!("{v:.0}"),
                _ if v.is_nan() => String::new(),
                _ => format!("{v:.16e}"),
            });
            w.write_record(cells)?;
        }
        w.flush()?;
        Ok(())
    };
    flush(&mut w).map_err(|e| io_err(path, e.into()))
}
