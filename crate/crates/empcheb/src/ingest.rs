//! Sample ingestion from CSV and JSON Lines.
//!
//! CSV: one sample per row, numeric cells, optional header line. A first row
//! that does not parse as numbers is taken as the header. Blank lines and
//! lines starting with `#` are skipped.
//! JSONL: one object per line with the sample under `"x"`.
//!
//! Rows carry their 1-based source line so verdicts can point back at them.

use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// `.jsonl`/`.ndjson` paths are JSON Lines, everything else CSV.
    pub fn from_path(path: &str) -> Self {
        let lower = path.to_ascii_lowercase();
        if lower.ends_with(".jsonl") || lower.ends_with(".ndjson") {
            InputFormat::Jsonl
        } else {
            InputFormat::Csv
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" | "ndjson" => Ok(InputFormat::Jsonl),
            other => Err(format!("unknown input format `{other}` (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// 1-based line in the source.
    pub line: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("input contains no samples")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    fn format(line: u64, message: impl Into<String>) -> Self {
        IngestError::Format {
            line,
            message: message.into(),
        }
    }
}

/// Streaming reader over rows. The dimension is fixed by the first row.
pub struct RowReader<R: Read> {
    lines: std::io::Lines<BufReader<R>>,
    format: InputFormat,
    line: u64,
    header_allowed: bool,
    dim: Option<usize>,
}

#[derive(Deserialize)]
struct JsonSample {
    x: Vec<f64>,
}

impl<R: Read> RowReader<R> {
    pub fn new(reader: R, format: InputFormat) -> Self {
        RowReader {
            lines: BufReader::new(reader).lines(),
            format,
            line: 0,
            header_allowed: format == InputFormat::Csv,
            dim: None,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn next_row(&mut self) -> Option<Result<Row, IngestError>> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            let line = self.line;
            let text = text.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            match self.format {
                InputFormat::Csv => {
                    let header_allowed = std::mem::replace(&mut self.header_allowed, false);
                    match parse_csv_line(text) {
                        Ok(values) => return Some(Ok(Row { line, values })),
                        Err(_) if header_allowed => continue,
                        Err((column, cell)) => {
                            return Some(Err(IngestError::format(
                                line,
                                format!("column {column}: `{cell}` is not a number"),
                            )))
                        }
                    }
                }
                InputFormat::Jsonl => {
                    return Some(
                        serde_json::from_str::<JsonSample>(text)
                            .map(|s| Row { line, values: s.x })
                            .map_err(|e| IngestError::format(line, format!("expected {{\"x\": [numbers]}}: {e}"))),
                    )
                }
            }
        }
    }
}

/// Splits a line of numeric cells. Cells may be quoted; quotes cannot
/// contain commas since the cells must be numbers.
fn parse_csv_line(text: &str) -> Result<Vec<f64>, (usize, String)> {
    text.split(',')
        .enumerate()
        .map(|(i, cell)| {
            let cell = cell.trim();
            let bare = cell
                .strip_prefix('"')
                .and_then(|c| c.strip_suffix('"'))
                .unwrap_or(cell)
                .trim();
            bare.parse::<f64>().map_err(|_| (i + 1, cell.to_string()))
        })
        .collect()
}

impl<R: Read> Iterator for RowReader<R> {
    type Item = Result<Row, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = match self.next_row()? {
            Ok(row) => row,
            Err(e) => return Some(Err(e)),
        };
        if row.values.is_empty() {
            return Some(Err(IngestError::format(row.line, "row has no values")));
        }
        if let Some(j) = row.values.iter().position(|v| !v.is_finite()) {
            return Some(Err(IngestError::format(
                row.line,
                format!("column {}: non-finite value", j + 1),
            )));
        }
        match self.dim {
            None => self.dim = Some(row.values.len()),
            Some(dim) if dim != row.values.len() => {
                return Some(Err(IngestError::format(
                    row.line,
                    format!("expected {dim} values, found {}", row.values.len()),
                )))
            }
            Some(_) => {}
        }
        Some(Ok(row))
    }
}

/// Reads every row; an input without samples is an error.
pub fn read_rows<R: Read>(reader: R, format: InputFormat) -> Result<Vec<Row>, IngestError> {
    let rows = RowReader::new(reader, format).collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(rows)
}
