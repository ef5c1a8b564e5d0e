//! `RMAT` binary matrix files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RMAT"
//! 4       2     version, u16 LE (1)
//! 6       1     dtype, u8 (0 = f64 LE)
//! 7       4     rows, u32 LE
//! 11      4     cols, u32 LE
//! 15      8·r·c payload, row-major f64 LE
//! ```

use std::fs;
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RMAT";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u8 = 0;
pub const HEADER_LEN: usize = 15;

/// Serializes a matrix to `RMAT` bytes.
pub fn encode_matrix(m: MatRef<'_, f64>) -> Result<Vec<u8>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "cannot store an empty {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let rows = u32::try_from(m.nrows()).map_err(|_| Error::InvalidInput("too many rows".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::InvalidInput("too many columns".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.nrows() * m.ncols());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F64);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses `RMAT` bytes; `origin` names the source in error messages.
pub fn decode_matrix(bytes: &[u8], origin: &str) -> Result<Mat<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(origin, format!("header truncated at {} bytes", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(origin, "bad magic, expected RMAT"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    if bytes[6] != DTYPE_F64 {
        return Err(Error::format(origin, format!("unsupported dtype {}", bytes[6])));
    }
    let rows = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes")) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(origin, format!("empty {rows}x{cols} matrix")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(origin, "matrix size overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            origin,
            format!("payload is {} bytes, {rows}x{cols} needs {expected}", payload.len()),
        ));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| {
        let at = 8 * (i * cols + j);
        f64::from_le_bytes(payload[at..at + 8].try_into().expect("8 bytes"))
    }))
}

pub fn write_matrix(path: impl AsRef<Path>, m: MatRef<'_, f64>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, &path.display().to_string())
}
