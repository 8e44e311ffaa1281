//! Dense row-major weight matrices with 16-bit float or 8-bit integer elements.

use std::fmt;

use half::f16;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Element type of a weight tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    F16,
    I8,
}

impl ElementType {
    /// Width of one element in bytes.
    pub const fn bytes(self) -> usize {
        match self {
            ElementType::F16 => 2,
            ElementType::I8 => 1,
        }
    }

    /// Code used by the on-disk containers.
    pub const fn code(self) -> u8 {
        match self {
            ElementType::F16 => 0,
            ElementType::I8 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ElementType::F16),
            1 => Some(ElementType::I8),
            _ => None,
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementType::F16 => "f16",
            ElementType::I8 => "i8",
        })
    }
}

impl std::str::FromStr for ElementType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f16" | "fp16" | "float16" => Ok(ElementType::F16),
            "i8" | "int8" => Ok(ElementType::I8),
            other => Err(format!("unknown element type `{other}`")),
        }
    }
}

/// A flat element buffer. F16 elements are kept as raw bit patterns so that
/// copies and comparisons are bit-exact, NaN payloads included.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ElementBuf {
    F16(Vec<u16>),
    I8(Vec<i8>),
}

impl ElementBuf {
    pub fn zeros(dtype: ElementType, len: usize) -> Self {
        match dtype {
            ElementType::F16 => ElementBuf::F16(vec![0; len]),
            ElementType::I8 => ElementBuf::I8(vec![0; len]),
        }
    }

    pub fn empty(dtype: ElementType) -> Self {
        Self::zeros(dtype, 0)
    }

    pub fn dtype(&self) -> ElementType {
        match self {
            ElementBuf::F16(_) => ElementType::F16,
            ElementBuf::I8(_) => ElementType::I8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ElementBuf::F16(v) => v.len(),
            ElementBuf::I8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_len(&self) -> usize {
        self.len() * self.dtype().bytes()
    }

    /// True if element `i` is zero. For F16 both +0 (0x0000) and -0 (0x8000) count.
    #[inline]
    pub fn is_zero_at(&self, i: usize) -> bool {
        match self {
            ElementBuf::F16(v) => v[i] & 0x7fff == 0,
            ElementBuf::I8(v) => v[i] == 0,
        }
    }

    /// Magnitude key for element `i`; orders elements by absolute value.
    /// F16 NaNs sort above infinity.
    #[inline]
    pub fn magnitude_key(&self, i: usize) -> u16 {
        match self {
            ElementBuf::F16(v) => v[i] & 0x7fff,
            ElementBuf::I8(v) => v[i].unsigned_abs() as u16,
        }
    }

    #[inline]
    pub fn set_zero(&mut self, i: usize) {
        match self {
            ElementBuf::F16(v) => v[i] = 0,
            ElementBuf::I8(v) => v[i] = 0,
        }
    }

    /// Element `i` widened to `f32`.
    pub fn get_f32(&self, i: usize) -> f32 {
        match self {
            ElementBuf::F16(v) => f16::from_bits(v[i]).to_f32(),
            ElementBuf::I8(v) => v[i] as f32,
        }
    }

    /// Little-endian byte encoding of the whole buffer.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            ElementBuf::F16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ElementBuf::I8(v) => v.iter().map(|&x| x as u8).collect(),
        }
    }

    /// Decodes `bytes` as little-endian elements of `dtype`. Returns `None` if
    /// the length is not a multiple of the element width.
    pub fn from_le_bytes(dtype: ElementType, bytes: &[u8]) -> Option<Self> {
        match dtype {
            ElementType::F16 => {
                if !bytes.len().is_multiple_of(2) {
                    return None;
                }
                Some(ElementBuf::F16(
                    bytes
                        .chunks_exact(2)
                        .map(|c| u16::from_le_bytes([c[0], c[1]]))
                        .collect(),
                ))
            }
            ElementType::I8 => Some(ElementBuf::I8(bytes.iter().map(|&b| b as i8).collect())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("matrix dimensions {rows}x{cols} overflow the addressable element count")]
    Overflow { rows: usize, cols: usize },
    #[error("buffer holds {actual} elements, expected {expected} for the given shape")]
    LengthMismatch { expected: usize, actual: usize },
}

/// Row-major 2-D weight matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: ElementBuf,
}

pub(crate) fn checked_elems(rows: usize, cols: usize) -> Result<usize, ShapeError> {
    rows.checked_mul(cols)
        // keep bit and byte counts addressable too
        .filter(|n| n.checked_mul(2).is_some())
        .ok_or(ShapeError::Overflow { rows, cols })
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: ElementBuf) -> Result<Self, ShapeError> {
        let expected = checked_elems(rows, cols)?;
        if data.len() != expected {
            return Err(ShapeError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize, dtype: ElementType) -> Result<Self, ShapeError> {
        let n = checked_elems(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: ElementBuf::zeros(dtype, n),
        })
    }

    pub fn from_f16_bits(rows: usize, cols: usize, bits: Vec<u16>) -> Result<Self, ShapeError> {
        Self::new(rows, cols, ElementBuf::F16(bits))
    }

    pub fn from_f32(rows: usize, cols: usize, values: &[f32]) -> Result<Self, ShapeError> {
        let bits = values.iter().map(|&v| f16::from_f32(v).to_bits()).collect();
        Self::from_f16_bits(rows, cols, bits)
    }

    pub fn from_i8(rows: usize, cols: usize, values: Vec<i8>) -> Result<Self, ShapeError> {
        Self::new(rows, cols, ElementBuf::I8(values))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> ElementType {
        self.data.dtype()
    }

    pub fn data(&self) -> &ElementBuf {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut ElementBuf {
        &mut self.data
    }

    pub fn into_data(self) -> ElementBuf {
        self.data
    }

    /// Dense storage size in bytes.
    pub fn byte_len(&self) -> usize {
        self.data.byte_len()
    }

    pub fn count_zeros(&self) -> usize {
        (0..self.len()).filter(|&i| self.data.is_zero_at(i)).count()
    }

    /// Copies the given rows into a new `|rows| x cols` matrix.
    pub fn select_rows(&self, rows: &[usize]) -> DenseMatrix {
        let cols = self.cols;
        let data = match &self.data {
            ElementBuf::F16(v) => ElementBuf::F16(
                rows.iter()
                    .flat_map(|&r| v[r * cols..(r + 1) * cols].iter().copied())
                    .collect(),
            ),
            ElementBuf::I8(v) => ElementBuf::I8(
                rows.iter()
                    .flat_map(|&r| v[r * cols..(r + 1) * cols].iter().copied())
                    .collect(),
            ),
        };
        DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Copies the given columns into a new `rows x |cols|` matrix.
    pub fn select_cols(&self, cols: &[usize]) -> DenseMatrix {
        let width = self.cols;
        let rows = self.rows;
        let data = match &self.data {
            ElementBuf::F16(v) => ElementBuf::F16(
                (0..rows)
                    .flat_map(|r| cols.iter().map(move |&c| v[r * width + c]))
                    .collect(),
            ),
            ElementBuf::I8(v) => ElementBuf::I8(
                (0..rows)
                    .flat_map(|r| cols.iter().map(move |&c| v[r * width + c]))
                    .collect(),
            ),
        };
        DenseMatrix {
            rows,
            cols: cols.len(),
            data,
        }
    }

    /// Replaces every F16 negative zero with positive zero. Returns true if any
    /// element changed.
    pub fn canonicalize_zeros(&mut self) -> bool {
        match &mut self.data {
            ElementBuf::F16(v) => {
                let mut changed = false;
                for x in v.iter_mut().filter(|x| **x == 0x8000) {
                    *x = 0;
                    changed = true;
                }
                changed
            }
            ElementBuf::I8(_) => false,
        }
    }
}
