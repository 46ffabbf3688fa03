//! Shared helpers for the crate's CSV formats.
//!
//! All floating-point columns are written with 17 significant digits
//! (`{:.16e}`), which is enough for a written value to parse back to the
//! identical f64 bit pattern. Pipelines that round-trip data through
//! files therefore lose nothing.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("MalformedHeader: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("MalformedRow: line {line}: {message}")]
    Row { line: usize, message: String },
}

impl CsvError {
    pub fn code(&self) -> &'static str {
        match self {
            CsvError::Io(_) => "Io",
            CsvError::Header { .. } => "MalformedHeader",
            CsvError::Row { .. } => "MalformedRow",
        }
    }
}

/// Lossless float column format (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Append a lossless float column to a row buffer.
pub fn push_f64(row: &mut String, x: f64) {
    if !row.is_empty() {
        row.push(',');
    }
    let _ = write!(row, "{x:.16e}");
}

pub fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64, CsvError> {
    field.trim().parse::<f64>().map_err(|_| CsvError::Row {
        line,
        message: format!("column `{column}`: cannot parse `{field}` as a real number"),
    })
}

pub fn parse_usize(field: &str, line: usize, column: &str) -> Result<usize, CsvError> {
    field.trim().parse::<usize>().map_err(|_| CsvError::Row {
        line,
        message: format!("column `{column}`: cannot parse `{field}` as a non-negative integer"),
    })
}

/// Split CSV text into `(line_number, fields)` rows, checking the header.
///
/// Line numbers are 1-based and refer to the physical file, so the first
/// data row is line 2. Blank lines are skipped.
pub fn rows<'a>(
    text: &'a str,
    expected_header: &str,
) -> Result<Vec<(usize, Vec<&'a str>)>, CsvError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim(),
            None => {
                return Err(CsvError::Header {
                    expected: expected_header.to_string(),
                    found: "<empty file>".to_string(),
                })
            }
        }
    };
    if header != expected_header {
        return Err(CsvError::Header {
            expected: expected_header.to_string(),
            found: header.to_string(),
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        out.push((idx + 1, line.split(',').collect()));
    }
    Ok(out)
}

/// Check a row's field count against the schema.
pub fn expect_fields(fields: &[&str], n: usize, line: usize) -> Result<(), CsvError> {
    if fields.len() != n {
        return Err(CsvError::Row {
            line,
            message: format!("expected {n} fields, found {}", fields.len()),
        });
    }
    Ok(())
}
