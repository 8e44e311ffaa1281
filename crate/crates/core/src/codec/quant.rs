//! Symmetric per-tensor absmax quantization of the stored values.

use half::f16;

use super::{CodecError, EndorTensor};
use crate::matrix::{ElementBuf, ElementType};

const QMAX: f32 = 127.0;

/// Maps the non-zero F16 values of `t` to `i8` with `scale = max|v| / 127`.
/// The bitmap is kept as is, so a tiny value that rounds to 0 stays marked
/// as present.
pub fn quantize_values(t: &EndorTensor) -> Result<EndorTensor, CodecError> {
    let ElementBuf::F16(vals) = t.values() else {
        return Err(CodecError::DtypeMismatch {
            expected: ElementType::F16,
            found: t.dtype(),
        });
    };
    let mut absmax = 0.0f32;
    for &bits in vals {
        let v = f16::from_bits(bits).to_f32();
        if !v.is_finite() {
            return Err(CodecError::NonFinite(v));
        }
        absmax = absmax.max(v.abs());
    }
    let scale = if absmax > 0.0 { absmax / QMAX } else { 1.0 };
    let q = vals
        .iter()
        .map(|&bits| {
            (f16::from_bits(bits).to_f32() / scale)
                .round()
                .clamp(-QMAX, QMAX) as i8
        })
        .collect();
    let t = t.clone();
    let (rows, cols, bitmap, _, _, neg_zero) = t.into_parts();
    EndorTensor::from_parts(rows, cols, bitmap, ElementBuf::I8(q), Some(scale), neg_zero)
}

/// Inverse of [`quantize_values`]: `v = q * scale`, rounded to F16.
pub fn dequantize_values(t: &EndorTensor) -> Result<EndorTensor, CodecError> {
    let (ElementBuf::I8(q), Some(scale)) = (t.values(), t.quant_scale()) else {
        return Err(CodecError::DtypeMismatch {
            expected: ElementType::I8,
            found: t.dtype(),
        });
    };
    let vals = q
        .iter()
        .map(|&k| f16::from_f32(k as f32 * scale).to_bits())
        .collect();
    let t = t.clone();
    let (rows, cols, bitmap, _, _, neg_zero) = t.into_parts();
    EndorTensor::from_parts(rows, cols, bitmap, ElementBuf::F16(vals), None, neg_zero)
}
