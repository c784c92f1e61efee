//! Dense row-major embedding matrices and the CLM1 binary encoding.
//!
//! CLM1 layout (all little-endian):
//!
//! | offset | size        | content                     |
//! |--------|-------------|-----------------------------|
//! | 0      | 4           | magic `b"CLM1"`             |
//! | 4      | 4           | rows, `u32`                 |
//! | 8      | 4           | cols, `u32`                 |
//! | 12     | 4·rows·cols | `f32` entries, row-major    |
//!
//! Entries are held as `f64` in memory so that transforms run in double
//! precision; encoding rounds each entry to `f32` exactly once.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const CLM1_MAGIC: [u8; 4] = *b"CLM1";
pub const CLM1_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Consistency(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite entry at row {}, col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Consistency(format!(
                "row {i} has {} columns, expected {cols}",
                rows[i].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so zero-width matrices yield empty rows explicitly
        let cols = self.cols;
        (0..self.rows).map(move |i| &self.data[i * cols..(i + 1) * cols])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rounds every entry to the nearest `f32`, i.e. the precision persisted on disk.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = f64::from(*v as f32);
        }
    }

    /// Serializes to CLM1 bytes.
    pub fn to_clm1_bytes(&self) -> Result<Vec<u8>> {
        let rows = u32::try_from(self.rows)
            .map_err(|_| Error::Format(format!("{} rows exceed u32", self.rows)))?;
        let cols = u32::try_from(self.cols)
            .map_err(|_| Error::Format(format!("{} cols exceed u32", self.cols)))?;
        let mut out = Vec::with_capacity(CLM1_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&CLM1_MAGIC);
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(out)
    }

    /// Parses CLM1 bytes; trailing bytes are rejected as well as short payloads.
    pub fn from_clm1_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CLM1_HEADER_LEN {
            return Err(Error::Format(format!(
                "truncated header: {} bytes",
                bytes.len()
            )));
        }
        if bytes[..4] != CLM1_MAGIC {
            return Err(Error::Format("bad magic, expected CLM1".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("{rows}x{cols} payload size overflows")))?;
        let payload = &bytes[CLM1_HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::Format(format!(
                "truncated payload: expected {expected} bytes, got {}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::new(rows, cols, data)
    }
}
