//! Matrix Market coordinate format (1-based indices).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::sparse::SparseMatrix;
use crate::{Error, Result};

pub fn write_matrix_market_to<W: Write>(a: &SparseMatrix, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.rows(), a.cols(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_market_to(a, BufWriter::new(File::create(path)?))
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    read_matrix_market_from(File::open(path)?)
}

/// Reads `coordinate` files with `real`/`integer`/`pattern` fields and
/// `general`/`symmetric` symmetry.
pub fn read_matrix_market_from<R: Read>(r: R) -> Result<SparseMatrix> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };

    let (ln, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
    let header = header?.to_lowercase();
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(err(ln, "expected `%%MatrixMarket matrix coordinate <field> <symmetry>`"));
    }
    let pattern = match h[3] {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        _ => return Err(err(ln, "unsupported field type")),
    };
    let symmetric = match h[4] {
        "general" => false,
        "symmetric" => true,
        _ => return Err(err(ln, "unsupported symmetry")),
    };

    let mut size = None;
    let mut trip = Vec::new();
    let mut expected = 0usize;
    for (ln, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(err(ln, "expected `rows cols nnz`"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| err(ln, "bad size line"));
                let (m, n, nnz) = (p(toks[0])?, p(toks[1])?, p(toks[2])?);
                size = Some((m, n));
                expected = nnz;
                trip.reserve(nnz);
            }
            Some((m, n)) => {
                let need = if pattern { 2 } else { 3 };
                if toks.len() < need {
                    return Err(err(ln, "short entry line"));
                }
                let i: usize = toks[0].parse().map_err(|_| err(ln, "bad row index"))?;
                let j: usize = toks[1].parse().map_err(|_| err(ln, "bad column index"))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(err(ln, "index out of range"));
                }
                let v = if pattern { 1.0 } else { toks[2].parse().map_err(|_| err(ln, "bad value"))? };
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
                expected = expected.checked_sub(1).ok_or_else(|| err(ln, "more entries than declared"))?;
            }
        }
    }
    let (m, n) = size.ok_or_else(|| err(0, "missing size line"))?;
    if expected != 0 {
        return Err(Error::Parse { line: 0, msg: format!("{expected} entries missing") });
    }
    SparseMatrix::from_triplets(m, n, trip)
}
