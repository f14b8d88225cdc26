//! Matrix file formats.
//!
//! Binary layout: `rows: u64 LE`, `cols: u64 LE`, then `rows * cols` row-major
//! `f64 LE`. The JSON form is a nested array of rows.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub fn encode(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.as_slice().len());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 16 {
        return Err(Error::InvalidMatrix(format!(
            "binary matrix header truncated ({} bytes)",
            bytes.len()
        )));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let (rows, cols) = (word(0) as usize, word(1) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| Error::InvalidMatrix(format!("absurd shape {rows}x{cols}")))?;
    if bytes.len() != expected {
        return Err(Error::InvalidMatrix(format!(
            "{rows}x{cols} needs {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn write_binary(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(m))?;
    Ok(())
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<Matrix> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn write_json(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    fs::write(path, serde_json::to_vec(m)?)?;
    Ok(())
}

pub fn read_json(path: impl AsRef<Path>) -> Result<Matrix> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
