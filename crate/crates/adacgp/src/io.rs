//! File formats: dense and triplet CSV for GSO matrices, signal stream
//! CSV, boolean edge masks, and JSON-lines traces.
//!
//! Floats are written with 17 significant digits so that a write/read
//! round trip reproduces every `f64` bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::SignalStream;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        msg: format!("bad float `{}`: {e}", tok.trim()),
    })
}

/// Write a dense square matrix with an `n,<N>` header row.
pub fn write_gso_csv(path: &Path, w: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "n,{}", w.nrows())?;
    for row in w.rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Read a dense square matrix written by [`write_gso_csv`].
pub fn read_gso_csv(path: &Path) -> Result<Array2<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let n: usize = header
        .strip_prefix("n,")
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| Error::Parse { line: 1, msg: format!("expected `n,<count>`, got `{header}`") })?;
    let mut w = Array2::zeros((n, n));
    let mut row = 0usize;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if row >= n {
            return Err(Error::Parse { line: idx + 1, msg: format!("more than {n} rows") });
        }
        let tokens: Vec<&str> = line.split(',').collect();
        if tokens.len() != n {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {n} columns, got {}", tokens.len()),
            });
        }
        for (j, tok) in tokens.iter().enumerate() {
            w[[row, j]] = parse_f64(tok, idx + 1)?;
        }
        row += 1;
    }
    if row != n {
        return Err(Error::Parse { line: row + 1, msg: format!("expected {n} rows, got {row}") });
    }
    Ok(w)
}

/// Write the non-zero entries as an `i,j,w` triplet list.
pub fn write_gso_triplets(path: &Path, w: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "i,j,w")?;
    for ((i, j), v) in w.indexed_iter() {
        if *v != 0.0 {
            writeln!(out, "{i},{j},{}", fmt_f64(*v))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a triplet list into a dense `n x n` matrix.
pub fn read_gso_triplets(path: &Path, n: usize) -> Result<Array2<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut w = Array2::zeros((n, n));
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("i,") {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split(',').collect();
        if tokens.len() != 3 {
            return Err(Error::Parse { line: idx + 1, msg: "expected `i,j,w`".into() });
        }
        let i: usize = tokens[0].trim().parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("bad index `{}`", tokens[0]),
        })?;
        let j: usize = tokens[1].trim().parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("bad index `{}`", tokens[1]),
        })?;
        if i >= n || j >= n {
            return Err(Error::Parse { line: idx + 1, msg: format!("index ({i},{j}) out of range") });
        }
        w[[i, j]] = parse_f64(tokens[2], idx + 1)?;
    }
    Ok(w)
}

/// Write a stream as CSV, one row per step, with a leading comment line.
pub fn write_stream_csv(path: &Path, stream: &SignalStream) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# nodes={} samples={}", stream.n(), stream.len())?;
    for row in stream.samples().rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Read a stream CSV; `#`-prefixed lines are skipped.
pub fn read_stream_csv(path: &Path) -> Result<SignalStream> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Array1<f64>> = Vec::new();
    let mut n = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = trimmed
            .split(',')
            .map(|tok| parse_f64(tok, idx + 1))
            .collect::<Result<_>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: idx + 1, msg: "non-finite sample value".into() });
        }
        if n == 0 {
            n = values.len();
        } else if values.len() != n {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("ragged row: expected {n} columns, got {}", values.len()),
            });
        }
        rows.push(Array1::from_vec(values));
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "stream file has no samples".into() });
    }
    let mut samples = Array2::zeros((rows.len(), n));
    for (t, row) in rows.iter().enumerate() {
        samples.row_mut(t).assign(row);
    }
    Ok(SignalStream::new(samples, 0))
}

/// Write a boolean mask as 0/1 CSV.
pub fn write_mask_csv(path: &Path, mask: &Array2<bool>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in mask.rows() {
        let line: Vec<&str> = row.iter().map(|b| if *b { "1" } else { "0" }).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Read a 0/1 CSV mask.
pub fn read_mask_csv(path: &Path) -> Result<Array2<bool>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: Vec<bool> = trimmed
            .split(',')
            .map(|tok| match tok.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("mask entries must be 0 or 1, got `{other}`"),
                }),
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse { line: idx + 1, msg: "ragged mask row".into() });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows.len() != rows[0].len() {
        return Err(Error::Parse {
            line: rows.len(),
            msg: format!("mask must be square, got {} rows of {}", rows.len(),
                rows.first().map_or(0, Vec::len)),
        });
    }
    let n = rows.len();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]))
}

/// Serialize one record per line as JSON.
pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Parse { line: 0, msg: format!("serialize: {e}") })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty-printed JSON artifact.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse { line: 0, msg: format!("serialize: {e}") })?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
