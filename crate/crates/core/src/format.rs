//! Plain-text file formats.
//!
//! Matrix: a header line `field m n`, then `m` lines of `n` whitespace-separated
//! entries. Complex entries are written `re,im`.
//!
//! Sparse vector: a line with `n`, then one `index value` line per nonzero,
//! with one-based indices.
//!
//! Measurements: one magnitude per line.
//!
//! Blank lines and lines starting with `#` are ignored by every parser.
//! Writers emit the shortest decimal that round-trips each `f64`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Complex64, Entries, Field, MeasurementEnsemble, MeasurementVector, SparseVector};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(line, format!("`{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("`{token}` is not finite")));
    }
    Ok(v)
}

fn parse_usize(token: &str, line: usize, what: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("{what} `{token}` is not a non-negative integer")))
}

fn parse_complex(token: &str, line: usize) -> Result<Complex64> {
    match token.split_once(',') {
        Some((re, im)) => Ok(Complex64::new(parse_f64(re, line)?, parse_f64(im, line)?)),
        None => Ok(Complex64::new(parse_f64(token, line)?, 0.0)),
    }
}

fn push_real(out: &mut String, v: f64) {
    // Debug formatting is the shortest round-trip representation.
    let _ = write!(out, "{v:?}");
}

fn push_complex(out: &mut String, v: Complex64) {
    push_real(out, v.re);
    out.push(',');
    push_real(out, v.im);
}

pub fn write_matrix(a: &MeasurementEnsemble) -> String {
    let mut out = format!("{} {} {}\n", a.field(), a.m(), a.n());
    for i in 0..a.m() {
        for j in 0..a.n() {
            if j > 0 {
                out.push(' ');
            }
            match a.entries() {
                Entries::Real(mat) => push_real(&mut out, mat[(i, j)]),
                Entries::Complex(mat) => push_complex(&mut out, mat[(i, j)]),
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<MeasurementEnsemble> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty matrix file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::parse(hline, "header must be `field m n`"));
    }
    let field: Field = fields[0]
        .parse()
        .map_err(|_| Error::parse(hline, format!("unknown field `{}`", fields[0])))?;
    let m = parse_usize(fields[1], hline, "row count")?;
    let n = parse_usize(fields[2], hline, "column count")?;
    if m == 0 || n == 0 {
        return Err(Error::parse(hline, "matrix dimensions must be positive"));
    }
    let mut entries = Vec::with_capacity(m * n);
    let mut last_line = hline;
    for row in 0..m {
        let (lno, l) = lines
            .next()
            .ok_or_else(|| Error::parse(last_line + 1, format!("expected {m} rows, found {row}")))?;
        last_line = lno;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.len() != n {
            return Err(Error::parse(lno, format!("expected {n} entries, found {}", tokens.len())));
        }
        for t in tokens {
            let v = parse_complex(t, lno)?;
            if field == Field::Real && t.contains(',') {
                return Err(Error::parse(lno, "complex entry in a real matrix"));
            }
            entries.push(v);
        }
    }
    if let Some((lno, _)) = lines.next() {
        return Err(Error::parse(lno, format!("unexpected content after {m} rows")));
    }
    match field {
        Field::Real => {
            let re: Vec<f64> = entries.iter().map(|v| v.re).collect();
            MeasurementEnsemble::from_real(DMatrix::from_row_slice(m, n, &re))
        }
        Field::Complex => MeasurementEnsemble::from_complex(DMatrix::from_row_slice(m, n, &entries)),
    }
}

pub fn write_sparse_vector(x: &SparseVector) -> String {
    let mut out = format!("{}\n", x.n());
    for (&i, &v) in x.support().iter().zip(x.values()) {
        let _ = write!(out, "{} ", i + 1);
        match x.field() {
            Field::Real => push_real(&mut out, v.re),
            Field::Complex => push_complex(&mut out, v),
        }
        out.push('\n');
    }
    out
}

/// Parses a sparse vector. Without a field hint, any `re,im` value makes the
/// vector complex.
pub fn parse_sparse_vector(text: &str, field: Option<Field>) -> Result<SparseVector> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty vector file"))?;
    let n = parse_usize(header, hline, "dimension")?;
    if n == 0 {
        return Err(Error::parse(hline, "dimension must be positive"));
    }
    let mut entries: Vec<(usize, Complex64)> = Vec::new();
    let mut saw_complex = false;
    let mut prev: Option<usize> = None;
    for (lno, l) in lines {
        let tokens: Vec<&str> = l.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::parse(lno, "expected `index value`"));
        }
        let idx = parse_usize(tokens[0], lno, "index")?;
        if idx == 0 || idx > n {
            return Err(Error::parse(lno, format!("index {idx} outside 1..={n}")));
        }
        if prev.is_some_and(|p| p >= idx) {
            return Err(Error::parse(lno, "indices must be strictly increasing"));
        }
        prev = Some(idx);
        saw_complex |= tokens[1].contains(',');
        let v = parse_complex(tokens[1], lno)?;
        if v.norm() == 0.0 {
            return Err(Error::parse(lno, "listed values must be nonzero"));
        }
        entries.push((idx - 1, v));
    }
    let field = match field {
        Some(Field::Real) if saw_complex => {
            return Err(Error::invalid("complex value in a real vector"));
        }
        Some(f) => f,
        None if saw_complex => Field::Complex,
        None => Field::Real,
    };
    let (support, values) = entries.into_iter().unzip();
    SparseVector::new(field, n, support, values)
}

pub fn write_measurements(y: &MeasurementVector) -> String {
    let mut out = String::new();
    for &v in y.magnitudes() {
        push_real(&mut out, v);
        out.push('\n');
    }
    out
}

/// One magnitude per line.
pub fn parse_measurements(text: &str) -> Result<MeasurementVector> {
    let mut values = Vec::new();
    for (lno, l) in content_lines(text) {
        let v = parse_f64(l, lno)?;
        if v < 0.0 {
            return Err(Error::parse(lno, format!("magnitude {v} is negative")));
        }
        values.push(v);
    }
    MeasurementVector::new(values)
}

/// Comma- or whitespace-separated magnitudes, as given on a command line.
pub fn parse_inline_measurements(text: &str) -> Result<MeasurementVector> {
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_f64(t, 1))
        .collect::<Result<Vec<f64>>>()?;
    MeasurementVector::new(values)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
