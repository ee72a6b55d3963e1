//! Plain-text matrix CSV format.
//!
//! ```text
//! rows,cols
//! v00,v01,...
//! v10,v11,...
//! ```
//!
//! Values are row-major, printed with 17 significant digits so that
//! `read(write(m)) == m` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(24 * m.len() + 16);
    let _ = writeln!(out, "{},{}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV format. `origin` is only used in error messages.
pub fn matrix_from_csv(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty matrix file".into()))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    if dims.len() != 2 {
        return Err(parse_err(hline + 1, format!("expected `rows,cols`, got `{header}`")));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(hline + 1, format!("bad row count `{}`", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(hline + 1, format!("bad column count `{}`", dims[1])))?;

    let mut m = DMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (lno, line) in lines {
        if seen == rows {
            return Err(parse_err(lno + 1, format!("more than {rows} data rows")));
        }
        let mut count = 0;
        for (j, tok) in line.split(',').enumerate() {
            if j >= cols {
                return Err(parse_err(lno + 1, format!("more than {cols} values")));
            }
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(lno + 1, format!("bad value `{}`", tok.trim())))?;
            m[(seen, j)] = v;
            count += 1;
        }
        if count != cols {
            return Err(parse_err(lno + 1, format!("expected {cols} values, got {count}")));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(parse_err(0, format!("expected {rows} data rows, got {seen}")));
    }
    Ok(m)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    matrix_from_csv(&text, path)
}
