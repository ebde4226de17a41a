//! File plumbing shared by the modules: the CSV dialect (comma separated,
//! `#` comment lines, mandatory header) and atomic writes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Header names plus all data rows parsed as f64.
pub fn read_numeric_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_numeric_table(file, path)
}

/// As [`read_numeric_table`] for any reader; `origin` only labels errors.
pub fn parse_numeric_table<R: std::io::Read>(
    reader: R,
    origin: &Path,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(origin, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::parse(origin, "missing header row"));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::parse(origin, format!("record {}: `{f}` is not a number", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads a CSV whose data rows have exactly `columns` numeric fields.
/// A header that parses as numbers is rejected, since the header is mandatory.
pub fn read_numeric_csv(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let table = read_numeric_table(path)?;
    check_columns(table, columns, path)
}

pub fn parse_numeric_csv<R: std::io::Read>(
    reader: R,
    origin: &Path,
    columns: usize,
) -> Result<Vec<Vec<f64>>> {
    let table = parse_numeric_table(reader, origin)?;
    check_columns(table, columns, origin)
}

fn check_columns(
    (header, rows): (Vec<String>, Vec<Vec<f64>>),
    columns: usize,
    path: &Path,
) -> Result<Vec<Vec<f64>>> {
    if header.len() != columns {
        return Err(Error::parse(
            path,
            format!("expected {columns} columns, header has {}", header.len()),
        ));
    }
    if header.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::parse(path, "header row is missing"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != columns {
            return Err(Error::parse(
                path,
                format!("record {} has {} fields, expected {columns}", i + 1, r.len()),
            ));
        }
    }
    Ok(rows)
}

pub(crate) fn csv_string(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_numeric_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_atomic(path, csv_string(header, rows).as_bytes())
}
