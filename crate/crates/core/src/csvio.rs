//! Small helpers shared by every CSV artifact: exact-header reads with line
//! numbers in errors, and LF-terminated writes with round-trip float text.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A parsed data row together with its 1-based line number in the file.
pub(crate) struct Row {
    pub line: u64,
    pub record: csv::StringRecord,
}

pub(crate) fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Row>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows_from(path, file, header)
}

pub(crate) fn read_rows_from<R: std::io::Read>(
    path: &Path,
    reader: R,
    header: &[&str],
) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            found: found.iter().collect::<Vec<_>>().join(","),
            expected: header.join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push(Row { line, record: rec });
    }
    Ok(rows)
}

pub(crate) fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

impl Row {
    pub fn f64(&self, path: &Path, idx: usize) -> Result<f64> {
        let raw = self.record.get(idx).unwrap_or("");
        let v: f64 = raw
            .parse()
            .map_err(|_| parse_err(path, self.line, format!("cannot parse {raw:?} as number")))?;
        if !v.is_finite() {
            return Err(parse_err(
                path,
                self.line,
                format!("non-finite value {raw:?}"),
            ));
        }
        Ok(v)
    }

    pub fn usize(&self, path: &Path, idx: usize) -> Result<usize> {
        let raw = self.record.get(idx).unwrap_or("");
        raw.parse()
            .map_err(|_| parse_err(path, self.line, format!("cannot parse {raw:?} as index")))
    }

    pub fn str(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("")
    }
}

/// Writes a header plus rows, LF line endings, no quoting (all fields are
/// numbers or bare identifiers).
pub(crate) fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Shortest text that parses back to the identical f64.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}
