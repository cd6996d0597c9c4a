//! Gauge-study CSV ingestion and generic CSV output helpers.
//!
//! Input format: long CSV with header exactly `unit,replicate,value`, one
//! row per measurement. Unit and replicate labels may be arbitrary strings;
//! they map to indices in first-appearance order.

use crate::anova::BalancedData;
use crate::error::{Error, Result};
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

/// Parse a long-format study CSV into balanced data, rejecting unbalanced
/// designs, duplicate (unit, replicate) cells, and non-numeric values.
pub fn parse_study_csv(path: &Path) -> Result<BalancedData> {
    let bytes = std::fs::read(path)?;
    parse_study_csv_bytes(&bytes)
}

pub fn parse_study_csv_bytes(bytes: &[u8]) -> Result<BalancedData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
        .clone();
    let header: Vec<&str> = headers.iter().collect();
    if header != ["unit", "replicate", "value"] {
        return Err(Error::Data(format!(
            "expected header 'unit,replicate,value', got '{}'",
            header.join(",")
        )));
    }

    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut unit_order: Vec<String> = Vec::new();
    let mut unit_values: Vec<Vec<f64>> = Vec::new();
    let mut seen_cells: HashSet<(usize, String)> = HashSet::new();

    for (row_num, record) in reader.records().enumerate() {
        let line = row_num + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Data(format!("row {line}: {e}")))?;
        if record.len() != 3 {
            return Err(Error::Data(format!(
                "row {line}: expected 3 fields, got {}",
                record.len()
            )));
        }
        let unit = record[0].to_string();
        let replicate = record[1].to_string();
        let value: f64 = record[2]
            .parse()
            .map_err(|_| Error::Data(format!("row {line}: non-numeric value '{}'", &record[2])))?;
        if !value.is_finite() {
            return Err(Error::Data(format!(
                "row {line}: non-finite value '{}'",
                &record[2]
            )));
        }

        let idx = *unit_index.entry(unit.clone()).or_insert_with(|| {
            unit_order.push(unit.clone());
            unit_values.push(Vec::new());
            unit_order.len() - 1
        });
        if !seen_cells.insert((idx, replicate.clone())) {
            return Err(Error::Data(format!(
                "row {line}: duplicate measurement for unit '{unit}', replicate '{replicate}'"
            )));
        }
        unit_values[idx].push(value);
    }

    if unit_values.is_empty() {
        return Err(Error::Data("no measurement rows in CSV".into()));
    }
    let r = unit_values[0].len();
    let unbalanced: Vec<String> = unit_order
        .iter()
        .zip(&unit_values)
        .filter(|(_, v)| v.len() != r)
        .map(|(name, v)| format!("'{}': {} rows", name, v.len()))
        .collect();
    if !unbalanced.is_empty() {
        return Err(Error::Data(format!(
            "unbalanced design: first unit has {r} replicates but {}",
            unbalanced.join(", ")
        )));
    }
    BalancedData::from_rows(&unit_values)
}

/// Write bytes atomically: to a temp file in the target directory, then a
/// rename over the destination.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp_name = format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into()),
        std::process::id()
    );
    let tmp_path = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    {
        let mut f = std::fs::File::create(&tmp_path)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}
