//! CSV ingestion and emission.
//!
//! Inputs are UTF-8 with a header row and `.` decimals. Row and column
//! numbers in errors are 1-based and count data rows only.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::classify::LabeledSample;
use crate::error::{Error, Result};
use crate::sphere::DirectionalSample;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Divide every row by its norm instead of requiring unit rows.
    pub project: bool,
    /// Header name of a categorical label column.
    pub label_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Sample(DirectionalSample),
    Labeled(LabeledSample),
}

impl Loaded {
    pub fn sample(&self) -> &DirectionalSample {
        match self {
            Loaded::Sample(s) => s,
            Loaded::Labeled(l) => &l.y,
        }
    }

    pub fn into_sample(self) -> DirectionalSample {
        match self {
            Loaded::Sample(s) => s,
            Loaded::Labeled(l) => l.y,
        }
    }
}

/// A numeric table with its header. `labels` holds the label column when
/// one was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

fn parse_table<R: Read>(reader: R, label_column: Option<&str>) -> Result<NumericTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let all_headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            all_headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("label column '{name}' not found in header")))?,
        ),
        None => None,
    };
    let headers: Vec<String> = all_headers
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if headers.is_empty() {
        return Err(Error::Config("no numeric columns".into()));
    }
    let mut rows = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != all_headers.len() {
            return Err(Error::Row {
                row: i + 1,
                message: format!("expected {} fields, found {}", all_headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_idx {
                labels.as_mut().expect("label column").push(field.to_string());
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: j + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i + 1,
                    column: j + 1,
                    message: format!("'{field}' is not finite"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(NumericTable { headers, rows, labels })
}

/// Reads a header-first numeric CSV, optionally splitting off a label column.
pub fn read_numeric_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<NumericTable> {
    parse_table(File::open(path)?, label_column)
}

fn shift_row_error(e: Error) -> Error {
    match e {
        Error::Row { row, message } => Error::Row { row: row + 1, message },
        other => other,
    }
}

fn table_to_loaded(table: NumericTable, options: &LoadOptions) -> Result<Loaded> {
    let y = if options.project {
        DirectionalSample::from_rows_projected(table.rows)
    } else {
        DirectionalSample::from_rows(table.rows)
    }
    .map_err(shift_row_error)?;
    match table.labels {
        Some(names) => Ok(Loaded::Labeled(LabeledSample::from_named(y, &names)?)),
        None => Ok(Loaded::Sample(y)),
    }
}

/// Loads directional data, validating unit norm or projecting when asked.
pub fn load_directional_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Loaded> {
    let table = read_numeric_csv(path, options.label_column.as_deref())?;
    table_to_loaded(table, options)
}

/// As [`load_directional_csv`], reading from any reader.
pub fn load_directional_reader<R: Read>(reader: R, options: &LoadOptions) -> Result<Loaded> {
    table_to_loaded(parse_table(reader, options.label_column.as_deref())?, options)
}

/// Column names `y1..yk`.
pub fn default_headers(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("{prefix}{j}")).collect()
}

/// Writes a header row and numeric rows. Values use Rust's shortest
/// round-trip formatting.
pub fn write_numeric_csv<W: Write>(writer: W, headers: &[String], rows: impl IntoIterator<Item = impl AsRef<[f64]>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(headers)?;
    for row in rows {
        let row = row.as_ref();
        if row.len() != headers.len() {
            return Err(Error::DimensionMismatch {
                expected: headers.len(),
                got: row.len(),
            });
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sample_csv(path: impl AsRef<Path>, sample: &DirectionalSample) -> Result<()> {
    write_numeric_csv(File::create(path)?, &default_headers("y", sample.dim()), sample.rows())
}

/// Writes string records under a header.
pub fn write_records_csv<W: Write>(writer: W, headers: &[&str], records: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(headers)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
