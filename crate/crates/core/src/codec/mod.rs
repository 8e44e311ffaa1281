//! Bitmap sparse format for pruned weight matrices.
//!
//! A compressed tensor stores one bit per element marking the non-zero
//! positions, followed by the non-zero values packed in row-major scan order.
//! The value belonging to element `i` therefore sits at offset
//! `rank(bitmap, i)`, the number of set bits before `i`. Decompression is a
//! scatter driven by that rank; [`RankIndex`] caches per-chunk prefix counts so
//! every chunk of the output can be produced independently.

mod bitmap;
mod extract;
mod quant;

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{checked_elems, DenseMatrix, ElementBuf, ElementType, ShapeError};

pub use bitmap::{Bitmap, RankIndex, DEFAULT_CHUNK_SIZE};
pub use extract::{extract_cols, extract_cols_with, extract_rows, extract_rows_with};
pub use quant::{dequantize_values, quantize_values};

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("corrupt tensor: {0}")]
    Corrupt(String),
    #[error("rank index does not belong to this tensor")]
    IndexMismatch,
    #[error("chunk size {0} must be a power of two and at least 64")]
    InvalidChunkSize(usize),
    #[error("index {index} out of range for dimension {limit}")]
    OutOfBounds { index: usize, limit: usize },
    #[error("selection indices must be strictly increasing")]
    UnsortedSelection,
    #[error("expected {expected} tensor, found {found}")]
    DtypeMismatch {
        expected: ElementType,
        found: ElementType,
    },
    #[error("cannot quantize non-finite value {0}")]
    NonFinite(f32),
}

/// A weight matrix in bitmap sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct EndorTensor {
    rows: usize,
    cols: usize,
    bitmap: Bitmap,
    values: ElementBuf,
    quant_scale: Option<f32>,
    neg_zero_collapsed: bool,
}

impl EndorTensor {
    /// Assembles a tensor from its parts, checking the structural invariants.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        bitmap: Bitmap,
        values: ElementBuf,
        quant_scale: Option<f32>,
        neg_zero_collapsed: bool,
    ) -> Result<Self, CodecError> {
        let n = checked_elems(rows, cols)?;
        if bitmap.len() != n {
            return Err(CodecError::Corrupt(format!(
                "bitmap covers {} elements, shape has {n}",
                bitmap.len()
            )));
        }
        let ones = bitmap.count_ones();
        if values.len() != ones {
            return Err(CodecError::Corrupt(format!(
                "{} stored values but bitmap marks {ones} non-zeros",
                values.len()
            )));
        }
        if quant_scale.is_some() && values.dtype() != ElementType::I8 {
            return Err(CodecError::Corrupt(
                "quantization scale on a non-i8 tensor".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            bitmap,
            values,
            quant_scale,
            neg_zero_collapsed,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dtype(&self) -> ElementType {
        self.values.dtype()
    }

    pub fn bitmap(&self) -> &Bitmap {
        &self.bitmap
    }

    pub fn values(&self) -> &ElementBuf {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn quant_scale(&self) -> Option<f32> {
        self.quant_scale
    }

    /// True if compression folded one or more F16 negative zeros into +0.
    pub fn neg_zero_collapsed(&self) -> bool {
        self.neg_zero_collapsed
    }

    pub fn dense_bytes(&self) -> usize {
        self.rows * self.cols * self.dtype().bytes()
    }

    /// Payload size: packed values plus bitmap, without any container header.
    pub fn compressed_bytes(&self) -> usize {
        self.values.byte_len() + self.bitmap.as_bytes().len()
    }

    /// Builds a [`RankIndex`] over this tensor's bitmap.
    pub fn rank_index(&self, chunk_size: usize) -> Result<RankIndex, CodecError> {
        RankIndex::build(&self.bitmap, chunk_size)
    }

    pub(crate) fn into_parts(self) -> (usize, usize, Bitmap, ElementBuf, Option<f32>, bool) {
        (
            self.rows,
            self.cols,
            self.bitmap,
            self.values,
            self.quant_scale,
            self.neg_zero_collapsed,
        )
    }
}

/// Size of the compressed form relative to the dense matrix, ignoring any
/// container header: non-zero fraction plus one bit per element.
pub fn compression_ratio(dtype: ElementType, sparsity: f64) -> f64 {
    (1.0 - sparsity) + 1.0 / (8.0 * dtype.bytes() as f64)
}

/// Compresses `w` with a single row-major scan. F16 negative zeros are
/// treated as zeros and recorded in [`EndorTensor::neg_zero_collapsed`].
pub fn compress(w: &DenseMatrix) -> EndorTensor {
    let n = w.len();
    let mut bitmap = Bitmap::zeros(n);
    let mut neg_zero = false;
    let values = match w.data() {
        ElementBuf::F16(data) => {
            let mut vals = Vec::with_capacity(n / 2);
            for (i, &x) in data.iter().enumerate() {
                if x & 0x7fff != 0 {
                    bitmap.set(i);
                    vals.push(x);
                } else if x != 0 {
                    neg_zero = true;
                }
            }
            ElementBuf::F16(vals)
        }
        ElementBuf::I8(data) => {
            let mut vals = Vec::with_capacity(n / 2);
            for (i, &x) in data.iter().enumerate() {
                if x != 0 {
                    bitmap.set(i);
                    vals.push(x);
                }
            }
            ElementBuf::I8(vals)
        }
    };
    EndorTensor {
        rows: w.rows(),
        cols: w.cols(),
        bitmap,
        values,
        quant_scale: None,
        neg_zero_collapsed: neg_zero,
    }
}

/// Writes elements `[start, end)` of the dense output into `out`, which holds
/// exactly that range. `first` is the offset of the range's first stored value.
fn scatter_range<T: Copy + Default>(
    bitmap: &Bitmap,
    values: &[T],
    start: usize,
    end: usize,
    first: usize,
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), end - start);
    out.fill(T::default());
    let mut next = first;
    bitmap.for_each_one(start, end, |i| {
        out[i - start] = values[next];
        next += 1;
    });
}

/// Restores the dense matrix with one sequential scan.
pub fn decompress(t: &EndorTensor) -> Result<DenseMatrix, CodecError> {
    let n = t.bitmap.len();
    if t.values.len() != t.bitmap.count_ones() {
        return Err(CodecError::Corrupt(
            "value count does not match bitmap popcount".into(),
        ));
    }
    let data = match &t.values {
        ElementBuf::F16(v) => {
            let mut out = vec![0u16; n];
            scatter_range(&t.bitmap, v, 0, n, 0, &mut out);
            ElementBuf::F16(out)
        }
        ElementBuf::I8(v) => {
            let mut out = vec![0i8; n];
            scatter_range(&t.bitmap, v, 0, n, 0, &mut out);
            ElementBuf::I8(out)
        }
    };
    Ok(DenseMatrix::new(t.rows, t.cols, data)?)
}

/// Restores the dense matrix chunk by chunk, in parallel. Each chunk reads its
/// value offset from `idx` and touches only its own output range.
pub fn decompress_chunked(t: &EndorTensor, idx: &RankIndex) -> Result<DenseMatrix, CodecError> {
    idx.check_against(&t.bitmap, t.values.len())?;
    let n = t.bitmap.len();
    let cs = idx.chunk_size();
    fn run<T: Copy + Default + Send + Sync>(
        bitmap: &Bitmap,
        idx: &RankIndex,
        values: &[T],
        out: &mut [T],
    ) {
        let cs = idx.chunk_size();
        out.par_chunks_mut(cs).enumerate().for_each(|(k, region)| {
            let start = k * cs;
            scatter_range(
                bitmap,
                values,
                start,
                start + region.len(),
                idx.prefix()[k],
                region,
            );
        });
    }
    let data = match &t.values {
        ElementBuf::F16(v) => {
            let mut out = vec![0u16; n];
            run(&t.bitmap, idx, v, &mut out);
            ElementBuf::F16(out)
        }
        ElementBuf::I8(v) => {
            let mut out = vec![0i8; n];
            run(&t.bitmap, idx, v, &mut out);
            ElementBuf::I8(out)
        }
    };
    debug_assert_eq!(n.div_ceil(cs.max(1)), idx.num_chunks());
    Ok(DenseMatrix::new(t.rows, t.cols, data)?)
}

/// Decompresses only the listed chunks into `out`, in the order given.
/// Elements outside those chunks are left untouched.
pub fn decompress_chunks_into(
    t: &EndorTensor,
    idx: &RankIndex,
    chunks: &[usize],
    out: &mut DenseMatrix,
) -> Result<(), CodecError> {
    idx.check_against(&t.bitmap, t.values.len())?;
    if out.rows() != t.rows || out.cols() != t.cols || out.dtype() != t.dtype() {
        return Err(CodecError::Corrupt(
            "output matrix does not match tensor shape".into(),
        ));
    }
    for &k in chunks {
        if k >= idx.num_chunks() {
            return Err(CodecError::OutOfBounds {
                index: k,
                limit: idx.num_chunks(),
            });
        }
        let (start, end) = idx.chunk_range(k);
        let first = idx.prefix()[k];
        match (&t.values, out.data_mut()) {
            (ElementBuf::F16(v), ElementBuf::F16(o)) => {
                scatter_range(&t.bitmap, v, start, end, first, &mut o[start..end])
            }
            (ElementBuf::I8(v), ElementBuf::I8(o)) => {
                scatter_range(&t.bitmap, v, start, end, first, &mut o[start..end])
            }
            _ => unreachable!("dtype checked above"),
        }
    }
    Ok(())
}
