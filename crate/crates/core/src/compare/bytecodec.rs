//! General-purpose byte-stream compressors used as a baseline.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ByteCodecError {
    #[error("{codec}: {message}")]
    Codec { codec: String, message: String },
    #[error("{codec}: round trip did not reproduce the input")]
    Mismatch { codec: String },
}

/// A lossless byte compressor.
pub trait ByteCodec {
    fn name(&self) -> &str;
    fn compress_bytes(&self, input: &[u8]) -> Result<Vec<u8>, ByteCodecError>;
    fn decompress_bytes(
        &self,
        input: &[u8],
        expected_len: usize,
    ) -> Result<Vec<u8>, ByteCodecError>;
}

/// Pass-through codec.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityCodec;

impl ByteCodec for IdentityCodec {
    fn name(&self) -> &str {
        "identity"
    }

    fn compress_bytes(&self, input: &[u8]) -> Result<Vec<u8>, ByteCodecError> {
        Ok(input.to_vec())
    }

    fn decompress_bytes(
        &self,
        input: &[u8],
        _expected_len: usize,
    ) -> Result<Vec<u8>, ByteCodecError> {
        Ok(input.to_vec())
    }
}

/// Zstandard at a fixed level, frames carry a content checksum.
#[derive(Debug, Clone, Copy)]
pub struct ZstdCodec {
    pub level: i32,
}

impl Default for ZstdCodec {
    fn default() -> Self {
        Self { level: 3 }
    }
}

impl ZstdCodec {
    fn err(&self, e: impl std::fmt::Display) -> ByteCodecError {
        ByteCodecError::Codec {
            codec: self.name().to_string(),
            message: e.to_string(),
        }
    }
}

impl ByteCodec for ZstdCodec {
    fn name(&self) -> &str {
        "zstd"
    }

    fn compress_bytes(&self, input: &[u8]) -> Result<Vec<u8>, ByteCodecError> {
        let mut enc = zstd::bulk::Compressor::new(self.level).map_err(|e| self.err(e))?;
        enc.include_checksum(true).map_err(|e| self.err(e))?;
        enc.compress(input).map_err(|e| self.err(e))
    }

    fn decompress_bytes(
        &self,
        input: &[u8],
        expected_len: usize,
    ) -> Result<Vec<u8>, ByteCodecError> {
        zstd::bulk::decompress(input, expected_len).map_err(|e| self.err(e))
    }
}

/// Sizes and wall times of one compress/decompress round trip.
#[derive(Debug, Clone, Serialize)]
pub struct ByteCodecReport {
    pub codec_name: String,
    pub input_bytes: usize,
    pub output_bytes: usize,
    pub compress_seconds: f64,
    pub decompress_seconds: f64,
}

impl ByteCodecReport {
    pub fn ratio(&self) -> f64 {
        self.output_bytes as f64 / self.input_bytes.max(1) as f64
    }
}

/// Compresses and decompresses `payload`, failing unless the result matches.
pub fn byte_codec_roundtrip(
    payload: &[u8],
    codec: &dyn ByteCodec,
) -> Result<ByteCodecReport, ByteCodecError> {
    let t0 = Instant::now();
    let packed = codec.compress_bytes(payload)?;
    let compress_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let unpacked = codec.decompress_bytes(&packed, payload.len())?;
    let decompress_seconds = t1.elapsed().as_secs_f64();
    if unpacked != payload {
        return Err(ByteCodecError::Mismatch {
            codec: codec.name().to_string(),
        });
    }
    Ok(ByteCodecReport {
        codec_name: codec.name().to_string(),
        input_bytes: payload.len(),
        output_bytes: packed.len(),
        compress_seconds,
        decompress_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Flips one bit of the compressed stream before handing it to the inner codec.
    struct BitFlip<C> {
        inner: C,
        bit: usize,
    }

    impl<C: ByteCodec> ByteCodec for BitFlip<C> {
        fn name(&self) -> &str {
            self.inner.name()
        }

        fn compress_bytes(&self, input: &[u8]) -> Result<Vec<u8>, ByteCodecError> {
            self.inner.compress_bytes(input)
        }

        fn decompress_bytes(
            &self,
            input: &[u8],
            expected_len: usize,
        ) -> Result<Vec<u8>, ByteCodecError> {
            let mut bytes = input.to_vec();
            let bit = self.bit % (bytes.len() * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
            self.inner.decompress_bytes(&bytes, expected_len)
        }
    }

    fn sample_payload() -> Vec<u8> {
        (0..4096u32)
            .flat_map(|i| (i.wrapping_mul(2654435761) >> 7).to_le_bytes())
            .collect()
    }

    #[test]
    fn zeros_compress_well() {
        let payload = vec![0u8; 1 << 20];
        let r = byte_codec_roundtrip(&payload, &ZstdCodec::default()).unwrap();
        assert!(r.output_bytes * 100 < r.input_bytes);
        assert!(r.compress_seconds >= 0.0 && r.decompress_seconds >= 0.0);
    }

    #[test]
    fn identity_keeps_size() {
        let payload = sample_payload();
        let r = byte_codec_roundtrip(&payload, &IdentityCodec).unwrap();
        assert_eq!(r.output_bytes, r.input_bytes);
        assert_eq!(r.ratio(), 1.0);
    }

    #[test]
    fn bit_flips_never_pass() {
        let payload = sample_payload();
        let packed_len = ZstdCodec::default().compress_bytes(&payload).unwrap().len();
        for bit in (0..packed_len * 8).step_by(13) {
            let z = BitFlip {
                inner: ZstdCodec::default(),
                bit,
            };
            assert!(
                byte_codec_roundtrip(&payload, &z).is_err(),
                "zstd bit {bit}"
            );
        }
        for bit in [0, 1, 100, 9999] {
            let id = BitFlip {
                inner: IdentityCodec,
                bit,
            };
            assert!(matches!(
                byte_codec_roundtrip(&payload, &id),
                Err(ByteCodecError::Mismatch { .. })
            ));
        }
    }
}
