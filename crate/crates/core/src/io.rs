//! CSV / JSON artifact writers and readers.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::renewal::TransitionProbabilityMatrix;
use crate::sos::RecoveryCurve;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    csv::Writer::from_path(path).map_err(Error::from)
}

/// Write a header row followed by numeric rows.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Numeric table with its header.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("{}: bad number {s:?}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// `time,value` pairs, e.g. a recovery function sampled on a grid.
pub fn write_xy_csv(path: &Path, times: &[f64], values: &[f64]) -> Result<()> {
    write_table(
        path,
        &["time", "value"],
        times.iter().zip(values).map(|(&t, &v)| vec![t, v]),
    )
}

/// `time,value,stderr`; exact curves get a zero standard error.
pub fn write_curve_csv(path: &Path, curve: &RecoveryCurve) -> Result<()> {
    let zeros = vec![0.0; curve.values.len()];
    let se = curve.stderr.as_deref().unwrap_or(&zeros);
    write_table(
        path,
        &["time", "value", "stderr"],
        curve
            .grid
            .times()
            .iter()
            .zip(&curve.values)
            .zip(se)
            .map(|((&t, &v), &s)| vec![t, v, s]),
    )
}

/// One `N x N` CSV of `R(t_k)` with header `to_0,...,to_{N-1}`.
pub fn write_matrix_slice(path: &Path, r: &TransitionProbabilityMatrix, k: usize) -> Result<()> {
    let n = r.n_states();
    let header: Vec<String> = (0..n).map(|j| format!("to_{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let m = r.at(k);
    write_table(path, &header, (0..n).map(|i| m[i * n..(i + 1) * n].to_vec()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(toml::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    #[test]
    fn curve_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let curve = RecoveryCurve {
            grid: TimeGrid::uniform(1.0, 3).unwrap(),
            values: vec![0.0, 0.25, 0.75],
            stderr: None,
        };
        write_curve_csv(&path, &curve).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "time,value,stderr\n0,0,0\n0.5,0.25,0\n1,0.75,0\n");
        let (header, rows) = read_table(&path).unwrap();
        assert_eq!(header, vec!["time", "value", "stderr"]);
        assert_eq!(rows[2], vec![1.0, 0.75, 0.0]);
    }
}
