//! Compressed sparse row encoding with 16- or 32-bit column indices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{DenseMatrix, ElementBuf, ElementType, ShapeError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CsrError {
    #[error("{cols} columns do not fit {width}-bit column indices")]
    IndexWidth { cols: usize, width: u32 },
    #[error("unsupported index width {0}, expected 16 or 32")]
    UnsupportedWidth(u32),
    #[error("malformed CSR tensor: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Width of stored column indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexWidth {
    U16,
    U32,
}

impl IndexWidth {
    pub fn from_bits(bits: u32) -> Result<Self, CsrError> {
        match bits {
            16 => Ok(IndexWidth::U16),
            32 => Ok(IndexWidth::U32),
            other => Err(CsrError::UnsupportedWidth(other)),
        }
    }

    pub const fn bytes(self) -> usize {
        match self {
            IndexWidth::U16 => 2,
            IndexWidth::U32 => 4,
        }
    }

    pub const fn bits(self) -> u32 {
        self.bytes() as u32 * 8
    }

    fn max_cols(self) -> u64 {
        1u64 << self.bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColIndices {
    U16(Vec<u16>),
    U32(Vec<u32>),
}

impl ColIndices {
    fn len(&self) -> usize {
        match self {
            ColIndices::U16(v) => v.len(),
            ColIndices::U32(v) => v.len(),
        }
    }

    #[inline]
    fn get(&self, i: usize) -> usize {
        match self {
            ColIndices::U16(v) => v[i] as usize,
            ColIndices::U32(v) => v[i] as usize,
        }
    }

    pub fn width(&self) -> IndexWidth {
        match self {
            ColIndices::U16(_) => IndexWidth::U16,
            ColIndices::U32(_) => IndexWidth::U32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrTensor {
    pub rows: usize,
    pub cols: usize,
    pub row_offsets: Vec<u64>,
    pub col_indices: ColIndices,
    pub values: ElementBuf,
}

impl CsrTensor {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn dtype(&self) -> ElementType {
        self.values.dtype()
    }

    /// Exact storage: 8-byte row offsets, column indices, values.
    pub fn byte_len(&self) -> usize {
        self.row_offsets.len() * 8
            + self.col_indices.len() * self.col_indices.width().bytes()
            + self.values.byte_len()
    }

    /// Storage without the row offsets.
    pub fn index_and_value_bytes(&self) -> usize {
        self.col_indices.len() * self.col_indices.width().bytes() + self.values.byte_len()
    }
}

pub fn csr_compress(w: &DenseMatrix, width: IndexWidth) -> Result<CsrTensor, CsrError> {
    let (rows, cols) = (w.rows(), w.cols());
    if cols as u64 > width.max_cols() {
        return Err(CsrError::IndexWidth {
            cols,
            width: width.bits(),
        });
    }
    fn encode<T: Copy, I: TryFrom<usize>>(
        data: &[T],
        rows: usize,
        cols: usize,
        is_zero: impl Fn(T) -> bool,
    ) -> (Vec<u64>, Vec<I>, Vec<T>) {
        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut idx = Vec::new();
        let mut vals = Vec::new();
        row_offsets.push(0u64);
        for row in data.chunks(cols.max(1)).take(rows) {
            for (c, &x) in row.iter().enumerate() {
                if !is_zero(x) {
                    idx.push(I::try_from(c).ok().expect("width checked by caller"));
                    vals.push(x);
                }
            }
            row_offsets.push(vals.len() as u64);
        }
        row_offsets.resize(rows + 1, vals.len() as u64);
        (row_offsets, idx, vals)
    }
    let (row_offsets, col_indices, values) = match (w.data(), width) {
        (ElementBuf::F16(d), IndexWidth::U16) => {
            let (o, i, v) = encode::<u16, u16>(d, rows, cols, |x| x & 0x7fff == 0);
            (o, ColIndices::U16(i), ElementBuf::F16(v))
        }
        (ElementBuf::F16(d), IndexWidth::U32) => {
            let (o, i, v) = encode::<u16, u32>(d, rows, cols, |x| x & 0x7fff == 0);
            (o, ColIndices::U32(i), ElementBuf::F16(v))
        }
        (ElementBuf::I8(d), IndexWidth::U16) => {
            let (o, i, v) = encode::<i8, u16>(d, rows, cols, |x| x == 0);
            (o, ColIndices::U16(i), ElementBuf::I8(v))
        }
        (ElementBuf::I8(d), IndexWidth::U32) => {
            let (o, i, v) = encode::<i8, u32>(d, rows, cols, |x| x == 0);
            (o, ColIndices::U32(i), ElementBuf::I8(v))
        }
    };
    Ok(CsrTensor {
        rows,
        cols,
        row_offsets,
        col_indices,
        values,
    })
}

fn validate(t: &CsrTensor) -> Result<(), CsrError> {
    let corrupt = |m: &str| Err(CsrError::Corrupt(m.to_string()));
    if t.row_offsets.len() != t.rows + 1 || t.row_offsets[0] != 0 {
        return corrupt("row offsets must have rows + 1 entries starting at 0");
    }
    if t.row_offsets.windows(2).any(|w| w[0] > w[1]) {
        return corrupt("row offsets decrease");
    }
    let nnz = t.row_offsets[t.rows] as usize;
    if nnz != t.values.len() || nnz != t.col_indices.len() {
        return corrupt("final row offset disagrees with value or index count");
    }
    for r in 0..t.rows {
        let (a, b) = (t.row_offsets[r] as usize, t.row_offsets[r + 1] as usize);
        for i in a..b {
            let c = t.col_indices.get(i);
            if c >= t.cols || (i > a && c <= t.col_indices.get(i - 1)) {
                return corrupt("column indices must be strictly increasing and in range");
            }
        }
    }
    Ok(())
}

pub fn csr_decompress(t: &CsrTensor) -> Result<DenseMatrix, CsrError> {
    validate(t)?;
    let mut out = DenseMatrix::zeros(t.rows, t.cols, t.dtype())?;
    for r in 0..t.rows {
        for i in t.row_offsets[r] as usize..t.row_offsets[r + 1] as usize {
            let dst = r * t.cols + t.col_indices.get(i);
            match (out.data_mut(), &t.values) {
                (ElementBuf::F16(o), ElementBuf::F16(v)) => o[dst] = v[i],
                (ElementBuf::I8(o), ElementBuf::I8(v)) => o[dst] = v[i],
                _ => unreachable!(),
            }
        }
    }
    Ok(out)
}

/// CSR size relative to dense, counting column indices and values but not
/// row offsets, which vanish relative to the rest for wide matrices.
pub fn csr_size_ratio(dtype: ElementType, sparsity: f64, width: IndexWidth) -> f64 {
    let eb = dtype.bytes() as f64;
    (1.0 - sparsity) * (eb + width.bytes() as f64) / eb
}
