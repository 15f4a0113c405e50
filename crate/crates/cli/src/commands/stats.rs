use std::path::Path;

use l2lab::stats::{mann_whitney_u_with, MannWhitney, SampleGroup};

use crate::error::{CliError, Result};

/// Non-empty cells of column `name`.
fn column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::config(e.to_string()))?.clone();
    let idx = headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::config(format!("{}: no column {name:?}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(e.to_string()))?;
        let cell = rec.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        out.push(cell.parse::<f64>().map_err(|e| {
            CliError::config(format!("{}: row {}, column {name}: {e}", path.display(), i + 2))
        })?);
    }
    Ok(out)
}

pub fn run(path: &Path, a: &str, b: &str, exact_max: usize) -> Result<MannWhitney> {
    let ga = SampleGroup::new(a, column(path, a)?)?;
    let gb = SampleGroup::new(b, column(path, b)?)?;
    Ok(mann_whitney_u_with(&ga, &gb, exact_max)?)
}
