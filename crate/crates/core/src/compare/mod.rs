//! Baseline encodings the bitmap format is measured against.

mod bytecodec;
mod csr;

pub use bytecodec::{
    byte_codec_roundtrip, ByteCodec, ByteCodecError, ByteCodecReport, IdentityCodec, ZstdCodec,
};
pub use csr::{
    csr_compress, csr_decompress, csr_size_ratio, ColIndices, CsrError, CsrTensor, IndexWidth,
};
