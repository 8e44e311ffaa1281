//! Row and column extraction straight from the compressed form.
//!
//! The value offset of a row's first element is `rank(row * cols)`, so only
//! the selected rows' bitmap bits and values are read.

use super::{Bitmap, CodecError, EndorTensor, RankIndex, DEFAULT_CHUNK_SIZE};
use crate::matrix::{DenseMatrix, ElementBuf};

fn check_selection(sel: &[usize], limit: usize) -> Result<(), CodecError> {
    if let Some(&bad) = sel.iter().find(|&&i| i >= limit) {
        return Err(CodecError::OutOfBounds { index: bad, limit });
    }
    if sel.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CodecError::UnsortedSelection);
    }
    Ok(())
}

/// Returns the selected rows as a `|rows| x cols` dense matrix.
pub fn extract_rows(t: &EndorTensor, rows: &[usize]) -> Result<DenseMatrix, CodecError> {
    let idx = t.rank_index(DEFAULT_CHUNK_SIZE)?;
    extract_rows_with(t, &idx, rows)
}

pub fn extract_rows_with(
    t: &EndorTensor,
    idx: &RankIndex,
    rows: &[usize],
) -> Result<DenseMatrix, CodecError> {
    idx.check_against(t.bitmap(), t.nnz())?;
    check_selection(rows, t.rows())?;
    let cols = t.cols();
    fn gather<T: Copy + Default>(
        bitmap: &Bitmap,
        idx: &RankIndex,
        values: &[T],
        rows: &[usize],
        cols: usize,
    ) -> Vec<T> {
        let mut out = vec![T::default(); rows.len() * cols];
        for (slot, &r) in rows.iter().enumerate() {
            let start = r * cols;
            let mut next = idx.rank(bitmap, start);
            let dst = &mut out[slot * cols..(slot + 1) * cols];
            for (c, d) in dst.iter_mut().enumerate() {
                if bitmap.get(start + c) {
                    *d = values[next];
                    next += 1;
                }
            }
        }
        out
    }
    let data = match t.values() {
        ElementBuf::F16(v) => ElementBuf::F16(gather(t.bitmap(), idx, v, rows, cols)),
        ElementBuf::I8(v) => ElementBuf::I8(gather(t.bitmap(), idx, v, rows, cols)),
    };
    Ok(DenseMatrix::new(rows.len(), cols, data)?)
}

/// Returns the selected columns as a `rows x |cols|` dense matrix.
pub fn extract_cols(t: &EndorTensor, cols: &[usize]) -> Result<DenseMatrix, CodecError> {
    let idx = t.rank_index(DEFAULT_CHUNK_SIZE)?;
    extract_cols_with(t, &idx, cols)
}

pub fn extract_cols_with(
    t: &EndorTensor,
    idx: &RankIndex,
    cols: &[usize],
) -> Result<DenseMatrix, CodecError> {
    idx.check_against(t.bitmap(), t.nnz())?;
    check_selection(cols, t.cols())?;
    let width = t.cols();
    let rows = t.rows();
    fn gather<T: Copy + Default>(
        bitmap: &Bitmap,
        idx: &RankIndex,
        values: &[T],
        sel: &[usize],
        rows: usize,
        width: usize,
    ) -> Vec<T> {
        let mut out = vec![T::default(); rows * sel.len()];
        for r in 0..rows {
            let start = r * width;
            let base = idx.rank(bitmap, start);
            // running count of set bits between the row start and the current column
            let mut seen = 0;
            let mut pos = 0;
            for (j, &c) in sel.iter().enumerate() {
                seen += bitmap.count_range(start + pos, start + c);
                pos = c;
                if bitmap.get(start + c) {
                    out[r * sel.len() + j] = values[base + seen];
                }
            }
        }
        out
    }
    let data = match t.values() {
        ElementBuf::F16(v) => ElementBuf::F16(gather(t.bitmap(), idx, v, cols, rows, width)),
        ElementBuf::I8(v) => ElementBuf::I8(gather(t.bitmap(), idx, v, cols, rows, width)),
    };
    Ok(DenseMatrix::new(rows, cols.len(), data)?)
}
