//! On-disk containers.
//!
//! `.endor` layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ENDR"
//! 4       2     version (1)
//! 6       1     dtype (0 = f16, 1 = i8)
//! 7       1     flags (bit 0: quantized, bit 1: negative zeros collapsed)
//! 8       8     rows
//! 16      8     cols
//! 24      8     nnz
//! 32      4     quant scale, f32, present iff bit 0 of flags
//! ..            bitmap, ceil(rows * cols / 8) bytes, LSB-first
//! ..            values, nnz elements (f16 as raw 16-bit patterns)
//! ..      4     CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! `.dense` uses magic "ENDD" and the same header without `nnz`, followed by
//! all `rows * cols` elements and the CRC.

mod bench;

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::codec::{Bitmap, CodecError, EndorTensor};
use crate::matrix::{DenseMatrix, ElementBuf, ElementType, ShapeError};

pub use bench::{bench_read, BenchReport};

pub const ENDOR_MAGIC: [u8; 4] = *b"ENDR";
pub const DENSE_MAGIC: [u8; 4] = *b"ENDD";
pub const FORMAT_VERSION: u16 = 1;

const FLAG_QUANTIZED: u8 = 1 << 0;
const FLAG_NEG_ZERO: u8 = 1 << 1;
const KNOWN_FLAGS: u8 = FLAG_QUANTIZED | FLAG_NEG_ZERO;
const CRC_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {found:02x?}, expected {expected:?}")]
    BadMagic { expected: String, found: Vec<u8> },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x} (file corrupt or truncated)")]
    Crc { stored: u32, computed: u32 },
    #[error("file too short for its header ({0} bytes); CRC trailer missing")]
    Truncated(usize),
    #[error("header nnz {header} disagrees with bitmap popcount {popcount}")]
    CountMismatch { header: u64, popcount: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Fixed header fields shared by both containers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndorFileHeader {
    pub dtype: ElementType,
    pub flags: u8,
    pub rows: u64,
    pub cols: u64,
    /// Only present in `.endor` files.
    pub nnz: Option<u64>,
    pub quant_scale: Option<f32>,
}

impl EndorFileHeader {
    pub fn encoded_len(&self) -> usize {
        4 + 2 + 1 + 1 + 8 + 8 + self.nnz.map_or(0, |_| 8) + self.quant_scale.map_or(0, |_| 4)
    }

    fn write_to(&self, magic: &[u8; 4], out: &mut impl Write) -> io::Result<()> {
        out.write_all(magic)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&[self.dtype.code(), self.flags])?;
        out.write_all(&self.rows.to_le_bytes())?;
        out.write_all(&self.cols.to_le_bytes())?;
        if let Some(nnz) = self.nnz {
            out.write_all(&nnz.to_le_bytes())?;
        }
        if let Some(scale) = self.quant_scale {
            out.write_all(&scale.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Writer that tracks a running CRC and byte count.
struct CrcWriter<W> {
    inner: W,
    hasher: crc32fast::Hasher,
    written: usize,
}

impl<W: Write> CrcWriter<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: crc32fast::Hasher::new(),
            written: 0,
        }
    }

    fn finish(mut self) -> io::Result<(W, usize)> {
        let crc = self.hasher.clone().finalize();
        self.inner.write_all(&crc.to_le_bytes())?;
        self.inner.flush()?;
        Ok((self.inner, self.written + CRC_LEN))
    }
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.written += n;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn write_elements(buf: &ElementBuf, out: &mut impl Write) -> io::Result<()> {
    match buf {
        ElementBuf::F16(v) => {
            let mut scratch = Vec::with_capacity(8192);
            for chunk in v.chunks(4096) {
                scratch.clear();
                scratch.extend(chunk.iter().flat_map(|x| x.to_le_bytes()));
                out.write_all(&scratch)?;
            }
            Ok(())
        }
        ElementBuf::I8(v) => {
            let mut scratch = Vec::with_capacity(8192);
            for chunk in v.chunks(8192) {
                scratch.clear();
                scratch.extend(chunk.iter().map(|&x| x as u8));
                out.write_all(&scratch)?;
            }
            Ok(())
        }
    }
}

fn flags_for(t: &EndorTensor) -> u8 {
    let mut flags = 0;
    if t.quant_scale().is_some() {
        flags |= FLAG_QUANTIZED;
    }
    if t.neg_zero_collapsed() {
        flags |= FLAG_NEG_ZERO;
    }
    flags
}

/// Streams `t` in `.endor` layout to `out`; returns the byte count.
pub fn write_endor<W: Write>(t: &EndorTensor, out: W) -> Result<usize, StoreError> {
    let header = EndorFileHeader {
        dtype: t.dtype(),
        flags: flags_for(t),
        rows: t.rows() as u64,
        cols: t.cols() as u64,
        nnz: Some(t.nnz() as u64),
        quant_scale: t.quant_scale(),
    };
    let mut w = CrcWriter::new(out);
    header.write_to(&ENDOR_MAGIC, &mut w)?;
    w.write_all(t.bitmap().as_bytes())?;
    write_elements(t.values(), &mut w)?;
    Ok(w.finish()?.1)
}

pub fn encode_endor(t: &EndorTensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(t.compressed_bytes() + 40);
    write_endor(t, &mut buf).expect("writing to memory cannot fail");
    buf
}

pub fn write_endor_file(t: &EndorTensor, path: impl AsRef<Path>) -> Result<usize, StoreError> {
    let file = BufWriter::with_capacity(1 << 20, File::create(path)?);
    let n = write_endor(t, file)?;
    Ok(n)
}

/// Cursor over a verified container body.
struct Fields<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Fields<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(StoreError::Truncated(self.bytes.len() + CRC_LEN))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Checks magic, version and CRC; returns the bytes covered by the CRC.
fn verify_frame<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8], StoreError> {
    if bytes.len() < 4 {
        return Err(StoreError::Truncated(bytes.len()));
    }
    if &bytes[..4] != magic {
        return Err(StoreError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: bytes[..4].to_vec(),
        });
    }
    if bytes.len() < 6 + CRC_LEN {
        return Err(StoreError::Truncated(bytes.len()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(StoreError::Crc { stored, computed });
    }
    Ok(body)
}

fn read_header(f: &mut Fields<'_>, with_nnz: bool) -> Result<EndorFileHeader, StoreError> {
    f.take(6)?;
    let code = f.u8()?;
    let dtype = ElementType::from_code(code)
        .ok_or_else(|| StoreError::Header(format!("unknown dtype code {code}")))?;
    let flags = f.u8()?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(StoreError::Header(format!(
            "unknown flag bits {flags:#04x}"
        )));
    }
    if flags & FLAG_QUANTIZED != 0 && dtype != ElementType::I8 {
        return Err(StoreError::Header(
            "quantized flag on a non-i8 tensor".into(),
        ));
    }
    let rows = f.u64()?;
    let cols = f.u64()?;
    let nnz = if with_nnz { Some(f.u64()?) } else { None };
    let quant_scale = if flags & FLAG_QUANTIZED != 0 {
        Some(f32::from_le_bytes(f.take(4)?.try_into().unwrap()))
    } else {
        None
    };
    Ok(EndorFileHeader {
        dtype,
        flags,
        rows,
        cols,
        nnz,
        quant_scale,
    })
}

fn shape_of(h: &EndorFileHeader) -> Result<(usize, usize, usize), StoreError> {
    let rows = usize::try_from(h.rows).map_err(|_| StoreError::Header("rows too large".into()))?;
    let cols = usize::try_from(h.cols).map_err(|_| StoreError::Header("cols too large".into()))?;
    let n = rows
        .checked_mul(cols)
        .filter(|n| n.checked_mul(2).is_some())
        .ok_or(ShapeError::Overflow { rows, cols })?;
    Ok((rows, cols, n))
}

fn read_elements(
    f: &mut Fields<'_>,
    dtype: ElementType,
    count: usize,
) -> Result<ElementBuf, StoreError> {
    let len = count
        .checked_mul(dtype.bytes())
        .ok_or_else(|| StoreError::Header("element count overflows".into()))?;
    let bytes = f.take(len)?;
    Ok(ElementBuf::from_le_bytes(dtype, bytes).expect("length is a multiple of the width"))
}

fn expect_end(f: &Fields<'_>) -> Result<(), StoreError> {
    if f.pos != f.bytes.len() {
        return Err(StoreError::Header(format!(
            "{} unexpected bytes after the payload",
            f.bytes.len() - f.pos
        )));
    }
    Ok(())
}

/// Parses a complete `.endor` image.
pub fn decode_endor(bytes: &[u8]) -> Result<EndorTensor, StoreError> {
    let body = verify_frame(bytes, &ENDOR_MAGIC)?;
    let mut f = Fields {
        bytes: body,
        pos: 0,
    };
    let h = read_header(&mut f, true)?;
    let (rows, cols, n) = shape_of(&h)?;
    let nnz = h.nnz.expect("read with nnz");
    if nnz > n as u64 {
        return Err(StoreError::Header(format!(
            "nnz {nnz} exceeds element count {n}"
        )));
    }
    let bitmap = Bitmap::from_bytes(n, f.take(n.div_ceil(8))?.to_vec())?;
    let popcount = bitmap.count_ones();
    if popcount as u64 != nnz {
        return Err(StoreError::CountMismatch {
            header: nnz,
            popcount,
        });
    }
    let values = read_elements(&mut f, h.dtype, popcount)?;
    expect_end(&f)?;
    Ok(EndorTensor::from_parts(
        rows,
        cols,
        bitmap,
        values,
        h.quant_scale,
        h.flags & FLAG_NEG_ZERO != 0,
    )?)
}

pub fn read_endor_file(path: impl AsRef<Path>) -> Result<EndorTensor, StoreError> {
    decode_endor(&read_all(path.as_ref())?)
}

/// Header of an `.endor` image, after full verification.
pub fn inspect_endor(bytes: &[u8]) -> Result<EndorFileHeader, StoreError> {
    let body = verify_frame(bytes, &ENDOR_MAGIC)?;
    let mut f = Fields {
        bytes: body,
        pos: 0,
    };
    read_header(&mut f, true)
}

fn read_all(path: &Path) -> io::Result<Vec<u8>> {
    let mut file = File::open(path)?;
    let len = file.metadata().map(|m| m.len() as usize).unwrap_or(0);
    let mut buf = Vec::with_capacity(len);
    file.read_to_end(&mut buf)?;
    Ok(buf)
}

/// A dense matrix as stored in a `.dense` container.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFile {
    pub matrix: DenseMatrix,
    pub quant_scale: Option<f32>,
}

pub fn write_dense<W: Write>(
    w: &DenseMatrix,
    quant_scale: Option<f32>,
    out: W,
) -> Result<usize, StoreError> {
    if quant_scale.is_some() && w.dtype() != ElementType::I8 {
        return Err(StoreError::InvalidArgument(
            "quantization scale on a non-i8 matrix".into(),
        ));
    }
    let header = EndorFileHeader {
        dtype: w.dtype(),
        flags: if quant_scale.is_some() {
            FLAG_QUANTIZED
        } else {
            0
        },
        rows: w.rows() as u64,
        cols: w.cols() as u64,
        nnz: None,
        quant_scale,
    };
    let mut cw = CrcWriter::new(out);
    header.write_to(&DENSE_MAGIC, &mut cw)?;
    write_elements(w.data(), &mut cw)?;
    Ok(cw.finish()?.1)
}

pub fn write_dense_file(
    w: &DenseMatrix,
    quant_scale: Option<f32>,
    path: impl AsRef<Path>,
) -> Result<usize, StoreError> {
    let file = BufWriter::with_capacity(1 << 20, File::create(path)?);
    write_dense(w, quant_scale, file)
}

pub fn decode_dense(bytes: &[u8]) -> Result<DenseFile, StoreError> {
    let body = verify_frame(bytes, &DENSE_MAGIC)?;
    let mut f = Fields {
        bytes: body,
        pos: 0,
    };
    let h = read_header(&mut f, false)?;
    if h.flags & FLAG_NEG_ZERO != 0 {
        return Err(StoreError::Header(
            "negative-zero flag is not valid in a dense file".into(),
        ));
    }
    let (rows, cols, n) = shape_of(&h)?;
    let data = read_elements(&mut f, h.dtype, n)?;
    expect_end(&f)?;
    Ok(DenseFile {
        matrix: DenseMatrix::new(rows, cols, data)?,
        quant_scale: h.quant_scale,
    })
}

pub fn read_dense_file(path: impl AsRef<Path>) -> Result<DenseFile, StoreError> {
    decode_dense(&read_all(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress, quantize_values};
    use crate::gen::{magnitude_prune, synth_weight, OpShape};

    fn sample(rows: usize, cols: usize, seed: u64) -> EndorTensor {
        let w = synth_weight(&OpShape::new("s", rows, cols, ElementType::F16), seed).unwrap();
        compress(&magnitude_prune(&w, 0.5).unwrap())
    }

    #[test]
    fn all_zero_4x4_layout() {
        let t = compress(&DenseMatrix::zeros(4, 4, ElementType::F16).unwrap());
        let bytes = encode_endor(&t);
        // 32-byte header, 2 bitmap bytes, no values, 4-byte CRC
        assert_eq!(bytes.len(), 32 + 2 + 4);
        assert_eq!(&bytes[..4], b"ENDR");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &4u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &0u64.to_le_bytes());
        let crc = crc32fast::hash(&bytes[..34]);
        assert_eq!(&bytes[34..], &crc.to_le_bytes());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.endor");
        let t = sample(13, 29, 4);
        let n = write_endor_file(&t, &path).unwrap();
        assert_eq!(n as u64, std::fs::metadata(&path).unwrap().len());
        assert_eq!(read_endor_file(&path).unwrap(), t);
    }

    #[test]
    fn quantized_roundtrip_keeps_scale() {
        let q = quantize_values(&sample(8, 16, 1)).unwrap();
        let bytes = encode_endor(&q);
        assert_eq!(bytes[7] & FLAG_QUANTIZED, FLAG_QUANTIZED);
        let back = decode_endor(&bytes).unwrap();
        assert_eq!(back.quant_scale(), q.quant_scale());
        assert_eq!(back, q);
    }

    #[test]
    fn neg_zero_flag_survives() {
        let w = DenseMatrix::from_f16_bits(1, 3, vec![0x8000, 0x3c00, 0]).unwrap();
        let t = compress(&w);
        let back = decode_endor(&encode_endor(&t)).unwrap();
        assert!(back.neg_zero_collapsed());
    }

    #[test]
    fn distinct_errors() {
        let good = encode_endor(&sample(4, 8, 2));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_endor(&bad),
            Err(StoreError::BadMagic { .. })
        ));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_endor(&bad),
            Err(StoreError::UnsupportedVersion(2))
        ));

        let mut bad = good.clone();
        let last = bad.len() - 6;
        bad[last] ^= 0x10;
        assert!(matches!(decode_endor(&bad), Err(StoreError::Crc { .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(
            decode_endor(truncated),
            Err(StoreError::Crc { .. })
        ));
        assert!(matches!(
            decode_endor(&good[..2]),
            Err(StoreError::Truncated(2))
        ));

        // consistent CRC over an inconsistent nnz
        let mut bad = good[..good.len() - 4].to_vec();
        let nnz = u64::from_le_bytes(bad[24..32].try_into().unwrap());
        bad[24..32].copy_from_slice(&(nnz - 1).to_le_bytes());
        bad.extend_from_slice(&crc32fast::hash(&bad).to_le_bytes());
        assert!(matches!(
            decode_endor(&bad),
            Err(StoreError::CountMismatch { .. })
        ));
    }

    #[test]
    fn single_byte_corruption_always_detected() {
        let good = encode_endor(&sample(6, 10, 3));
        for i in 0..good.len() {
            for delta in [1u8, 0x80, 0xff] {
                let mut bad = good.clone();
                bad[i] ^= delta;
                assert!(decode_endor(&bad).is_err(), "byte {i} ^ {delta:#x}");
            }
        }
    }

    #[test]
    fn writes_are_deterministic() {
        let t = sample(9, 9, 5);
        assert_eq!(encode_endor(&t), encode_endor(&t));
    }

    #[test]
    fn dense_roundtrip() {
        let w = synth_weight(&OpShape::new("d", 5, 7, ElementType::F16), 6).unwrap();
        let mut buf = Vec::new();
        let n = write_dense(&w, None, &mut buf).unwrap();
        assert_eq!(n, 24 + 70 + 4);
        assert_eq!(&buf[..4], b"ENDD");
        let back = decode_dense(&buf).unwrap();
        assert_eq!(back.matrix, w);
        assert_eq!(back.quant_scale, None);
        assert!(matches!(
            decode_endor(&buf),
            Err(StoreError::BadMagic { .. })
        ));

        let q = DenseMatrix::from_i8(1, 2, vec![3, -4]).unwrap();
        let mut buf = Vec::new();
        write_dense(&q, Some(0.25), &mut buf).unwrap();
        assert_eq!(decode_dense(&buf).unwrap().quant_scale, Some(0.25));
        assert!(write_dense(&w, Some(1.0), &mut Vec::new()).is_err());
    }

    #[test]
    fn inspect_reads_header() {
        let t = sample(4, 4, 7);
        let h = inspect_endor(&encode_endor(&t)).unwrap();
        assert_eq!((h.rows, h.cols, h.nnz), (4, 4, Some(t.nnz() as u64)));
        assert_eq!(h.encoded_len(), 32);
    }
}
