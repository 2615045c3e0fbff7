//! CSV ingestion and export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use cems::sampler::Provenance;
use cems::Dataset;
use nalgebra::DMatrix;

use crate::error::CliError;

/// Provenance columns appended to exported rows on request.
pub const PROVENANCE_COLUMNS: [&str; 4] = ["source", "anchor", "member", "residual"];

/// One exported row's origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RowOrigin {
    /// `original`, `cems` or `foma`.
    pub source: String,
    pub anchor: usize,
    pub member: Option<usize>,
    pub residual: f64,
}

impl RowOrigin {
    pub fn original(row: usize) -> Self {
        Self {
            source: "original".into(),
            anchor: row,
            member: Some(row),
            residual: 0.0,
        }
    }
}

impl From<&Provenance> for RowOrigin {
    fn from(p: &Provenance) -> Self {
        Self {
            source: p.method.to_string(),
            anchor: p.anchor_index,
            member: p.member_index,
            residual: p.residual,
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a header row plus numeric rows, splitting columns into features
/// and targets. Without selectors the last column is the target.
pub fn parse_csv<R: Read>(reader: R, targets: Option<&[String]>) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::Data("missing header row".into()));
    }
    for (i, name) in header.iter().enumerate() {
        if header[..i].contains(name) {
            return Err(CliError::Data(format!("duplicate column name '{name}'")));
        }
    }
    let target_cols: Vec<usize> = match targets {
        None => vec![header.len() - 1],
        Some(names) => {
            if names.is_empty() || names.iter().any(|n| n.trim().is_empty()) {
                return Err(CliError::Data("schema error: empty target selector".into()));
            }
            names
                .iter()
                .map(|n| {
                    header.iter().position(|h| h == n.trim()).ok_or_else(|| {
                        CliError::Data(format!(
                            "schema error: target column '{}' not found in header",
                            n.trim()
                        ))
                    })
                })
                .collect::<Result<_, _>>()?
        }
    };
    let feature_cols: Vec<usize> = (0..header.len()).filter(|c| !target_cols.contains(c)).collect();
    if feature_cols.is_empty() {
        return Err(CliError::Data(
            "schema error: no feature columns left after selecting targets".into(),
        ));
    }

    let mut values: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::Data(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!(
                    "line {line}, column {} ('{}'): '{cell}' is not a finite number",
                    c + 1,
                    header[c]
                ))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        values.push(row);
    }
    let n = values.len();
    let features = DMatrix::from_fn(n, feature_cols.len(), |i, j| values[i][feature_cols[j]]);
    let target_values = DMatrix::from_fn(n, target_cols.len(), |i, j| values[i][target_cols[j]]);
    let names = |cols: &[usize]| cols.iter().map(|&c| header[c].clone()).collect::<Vec<_>>();
    Ok(Dataset::new(
        features,
        target_values,
        names(&feature_cols),
        names(&target_cols),
    )?)
}

pub fn load_csv(path: &Path, targets: Option<&[String]>) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(BufReader::new(file), targets).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes `header` then one line per row of `rows`, with provenance columns
/// when `origins` is given.
pub fn write_csv<W: Write>(
    writer: W,
    header: &[String],
    rows: &DMatrix<f64>,
    origins: Option<&[RowOrigin]>,
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut head: Vec<&str> = header.iter().map(String::as_str).collect();
    if origins.is_some() {
        head.extend(PROVENANCE_COLUMNS);
    }
    w.write_record(&head)?;
    for i in 0..rows.nrows() {
        let mut record: Vec<String> = rows.row(i).iter().map(|v| format_value(*v)).collect();
        if let Some(origins) = origins {
            let o = &origins[i];
            record.push(o.source.clone());
            record.push(o.anchor.to_string());
            record.push(o.member.map(|m| m.to_string()).unwrap_or_default());
            record.push(format_value(o.residual));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(
    path: &Path,
    header: &[String],
    rows: &DMatrix<f64>,
    origins: Option<&[RowOrigin]>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(BufWriter::new(file), header, rows, origins).map_err(|e| {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            other => std::io::Error::other(format!("{other:?}")),
        };
        CliError::io(path, source)
    })
}

/// Column names of a dataset in joint order.
pub fn joint_header(dataset: &Dataset) -> Vec<String> {
    dataset
        .feature_names()
        .iter()
        .chain(dataset.target_names())
        .cloned()
        .collect()
}
