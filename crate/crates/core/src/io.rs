//! File formats: numeric CSV, the `BHSNE\0v1` binary matrix format, label
//! files, and plot-ready embedding CSV.
//!
//! Binary layout: 8-byte magic, `n` and `d` as little-endian `u64`, then
//! `n * d` little-endian IEEE-754 doubles in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, Embedding, LabelVector};

pub const BINARY_MAGIC: &[u8; 8] = b"BHSNE\x00v1";
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// Guesses from the extension; anything that isn't `.bin` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Format::Binary,
            _ => Format::Csv,
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_label(field: &str) -> Option<i64> {
    field.parse::<i64>().ok().or_else(|| {
        let v = field.parse::<f64>().ok()?;
        (v.is_finite() && v.fract() == 0.0).then_some(v as i64)
    })
}

/// Reads a comma-separated numeric matrix, one object per line. With
/// `has_label_column`, the last column is split off as integer labels.
/// Blank lines are ignored.
pub fn load_csv(path: impl AsRef<Path>, has_label_column: bool) -> Result<(DataMatrix, Option<LabelVector>)> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {w} columns, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        let (data_fields, label_field) = if has_label_column {
            if fields.len() < 2 {
                return Err(parse_err(path, lineno, "label column requested but row has fewer than 2 columns"));
            }
            let (d, l) = fields.split_at(fields.len() - 1);
            (d, Some(l[0]))
        } else {
            (&fields[..], None)
        };
        for (col, f) in data_fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("column {}: cannot parse {f:?} as a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, format!("column {}: non-finite value {f:?}", col + 1)));
            }
            values.push(v);
        }
        if let Some(l) = label_field {
            let label =
                parse_label(l).ok_or_else(|| parse_err(path, lineno, format!("cannot parse label {l:?} as an integer")))?;
            labels.push(label);
        }
        rows += 1;
    }

    let d = width.unwrap_or(0) - usize::from(has_label_column && width.is_some());
    let matrix = DataMatrix::new(rows, d, values)?;
    Ok((matrix, has_label_column.then_some(LabelVector(labels))))
}

/// One integer label per line; extra comma-separated columns are ignored.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        labels.push(parse_label(field).ok_or_else(|| parse_err(path, lineno + 1, format!("cannot parse label {field:?}")))?);
    }
    Ok(LabelVector(labels))
}

pub fn write_binary(path: impl AsRef<Path>, matrix: &DataMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(create(path)?);
    let io = |e| Error::io(path, e);
    w.write_all(BINARY_MAGIC).map_err(io)?;
    w.write_all(&(matrix.n() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(matrix.d() as u64).to_le_bytes()).map_err(io)?;
    for v in matrix.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let file = open(path)?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);

    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| format_err(format!("file is {file_len} bytes, shorter than the {HEADER_LEN}-byte header")))?;
    if &header[..8] != BINARY_MAGIC {
        return Err(format_err("bad magic; not a BHSNE v1 matrix".into()));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| format_err(format!("header dimensions {n}x{d} overflow")))?;
    let payload = file_len - HEADER_LEN as u64;
    if payload < expected {
        return Err(format_err(format!(
            "truncated payload: header declares {n}x{d} ({expected} bytes), found {payload}"
        )));
    }
    if payload > expected {
        return Err(format_err(format!(
            "{} trailing bytes after the declared {n}x{d} payload",
            payload - expected
        )));
    }

    let count = (n * d) as usize;
    let mut values = Vec::with_capacity(count);
    let mut buf = vec![0u8; 8 * 8192];
    let mut remaining = count;
    while remaining > 0 {
        let take = remaining.min(8192);
        let chunk = &mut buf[..take * 8];
        r.read_exact(chunk).map_err(|e| Error::io(path, e))?;
        values.extend(chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())));
        remaining -= take;
    }
    DataMatrix::new(n as usize, d as usize, values)
}

/// Loads a matrix in the given format (or the one implied by the extension).
/// Labels are only available from CSV with `label_column`.
pub fn load_matrix(
    path: impl AsRef<Path>,
    format: Option<Format>,
    label_column: bool,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    let path = path.as_ref();
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Csv => load_csv(path, label_column),
        Format::Binary => {
            if label_column {
                return Err(Error::InvalidArgument(
                    "binary matrices carry no label column; pass labels as a separate file".into(),
                ));
            }
            Ok((load_binary(path)?, None))
        }
    }
}

fn write_rows<W: Write>(w: &mut W, emb: &Embedding, labels: Option<&LabelVector>) -> std::io::Result<()> {
    for i in 0..emb.n() {
        let p = emb.point(i);
        for (k, v) in p.iter().enumerate() {
            if k > 0 {
                w.write_all(b",")?;
            }
            // Display prints the shortest string that parses back to the same f64.
            write!(w, "{v}")?;
        }
        if let Some(l) = labels {
            write!(w, ",{}", l.0[i])?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `y1,y2[,y3][,label]` rows.
pub fn write_embedding(path: impl AsRef<Path>, emb: &Embedding, labels: Option<&LabelVector>) -> Result<()> {
    let path = path.as_ref();
    if !emb.is_finite() {
        return Err(Error::Numeric("refusing to write a non-finite embedding".into()));
    }
    if let Some(l) = labels {
        l.check_len(emb.n())?;
    }
    let mut w = BufWriter::new(create(path)?);
    write_rows(&mut w, emb, labels)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(PathBuf::from(path), e))
}

pub fn read_embedding(path: impl AsRef<Path>, has_label_column: bool) -> Result<(Embedding, Option<LabelVector>)> {
    let (m, labels) = load_csv(path, has_label_column)?;
    Ok((m.into(), labels))
}
