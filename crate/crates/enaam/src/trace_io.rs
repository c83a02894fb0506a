//! Trace files: either one value per line, or a header row naming the
//! columns (typically `timestamp,value`).

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use enaam_core::traces::{TimeSeriesTrace, TraceError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("trace file {0} not found")]
    MissingFile(PathBuf),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: column `{column}` not in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}:{line}: malformed row: {reason}")]
    Malformed {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{path}:{line}: negative value {value}")]
    NegativeValue {
        path: PathBuf,
        line: u64,
        value: f64,
    },
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
}

/// Reads a trace. With a header row the values come from `column`; without
/// one, from the only (or last) field of each row.
pub fn load_csv_trace(
    path: impl AsRef<Path>,
    column: &str,
    slot_seconds: f64,
) -> Result<TimeSeriesTrace, TraceFileError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => TraceFileError::MissingFile(path.to_path_buf()),
        _ => TraceFileError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let malformed = |line: u64, reason: String| TraceFileError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut values = Vec::new();
    let mut layout: Option<(usize, usize)> = None; // (field count, value index)
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.into_kind() {
                csv::ErrorKind::Io(source) => TraceFileError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => malformed(line, format!("{other:?}")),
            }
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        let (width, idx) = match layout {
            Some(l) => l,
            None => {
                let is_header = row.iter().all(|f| f.parse::<f64>().is_err());
                if is_header {
                    let idx = row.iter().position(|f| f == column).ok_or_else(|| {
                        TraceFileError::MissingColumn {
                            path: path.to_path_buf(),
                            column: column.to_string(),
                        }
                    })?;
                    layout = Some((row.len(), idx));
                    continue;
                }
                let l = (row.len(), row.len() - 1);
                layout = Some(l);
                l
            }
        };
        if row.len() != width {
            return Err(malformed(
                line,
                format!("expected {width} fields, found {}", row.len()),
            ));
        }
        let field = &row[idx];
        let value: f64 = field
            .parse()
            .map_err(|_| malformed(line, format!("`{field}` is not a number")))?;
        if !value.is_finite() {
            return Err(malformed(line, format!("`{field}` is not finite")));
        }
        if value < 0.0 {
            return Err(TraceFileError::NegativeValue {
                path: path.to_path_buf(),
                line,
                value,
            });
        }
        values.push(value);
    }
    TimeSeriesTrace::new(column, slot_seconds, values).map_err(|source| TraceFileError::Trace {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `timestamp,<trace name>` rows, timestamps in seconds from the start.
pub fn write_csv(path: impl AsRef<Path>, trace: &TimeSeriesTrace) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["timestamp", trace.name()])?;
    for (i, v) in trace.values().iter().enumerate() {
        w.write_record([(i as f64 * trace.slot_seconds()).to_string(), v.to_string()])?;
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()
}
