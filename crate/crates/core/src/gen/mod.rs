//! Synthetic weights, pruning, and the model shape catalog.
//!
//! Weights come from a ChaCha8 stream seeded with `ChaCha8Rng::seed_from_u64`.
//! Each F16 element consumes one `u32` word `x` and takes the value
//! `(x >> 8) * 2^-23 - 1`, uniform on `[-1, 1)`. Each I8 element takes
//! `((x as u64 * 255) >> 32) - 127`, uniform on `[-127, 127]`. Only the
//! ChaCha8 keystream is relied on, so outputs are identical on every platform.

mod catalog;

use half::f16;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matrix::{DenseMatrix, ElementBuf, ElementType, ShapeError};

pub use catalog::{model_catalog, ModelSpec, OpShape, LLAMA2_70B, OPT_66B};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("sparsity {0} outside [0, 1)")]
    InvalidSparsity(String),
    #[error("invalid N:M pattern {n}:{m}, need 0 < n <= m")]
    InvalidPattern { n: usize, m: usize },
    #[error("unknown model `{0}`, expected opt-66b or llama2-70b")]
    UnknownModel(String),
    #[error("model `{model}` has no operation `{op}`")]
    UnknownOp { model: String, op: String },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Deterministic zero-mean random weights for `shape`.
pub fn synth_weight(shape: &OpShape, seed: u64) -> Result<DenseMatrix, GenError> {
    let n = shape
        .rows
        .checked_mul(shape.cols)
        .ok_or(ShapeError::Overflow {
            rows: shape.rows,
            cols: shape.cols,
        })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match shape.dtype {
        ElementType::F16 => ElementBuf::F16(
            (0..n)
                .map(|_| {
                    let x = rng.next_u32() >> 8;
                    f16::from_f32(x as f32 * f32::powi(2.0, -23) - 1.0).to_bits()
                })
                .collect(),
        ),
        ElementType::I8 => ElementBuf::I8(
            (0..n)
                .map(|_| (((rng.next_u32() as u64 * 255) >> 32) as i32 - 127) as i8)
                .collect(),
        ),
    };
    Ok(DenseMatrix::new(shape.rows, shape.cols, data)?)
}

/// Zeroes the `floor(sparsity * n)` smallest-magnitude elements. Among equal
/// magnitudes the element with the lower row-major index is pruned first.
///
/// Runs in linear time: a histogram over magnitude keys locates the threshold.
pub fn magnitude_prune(w: &DenseMatrix, sparsity: f64) -> Result<DenseMatrix, GenError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(GenError::InvalidSparsity(sparsity.to_string()));
    }
    let n = w.len();
    let target = (sparsity * n as f64).floor() as usize;
    let mut out = w.clone();
    if target == 0 {
        return Ok(out);
    }
    let data = w.data();
    let mut hist = vec![0usize; 1 << 15];
    for i in 0..n {
        hist[data.magnitude_key(i) as usize] += 1;
    }
    let mut below = 0;
    let mut threshold = 0;
    for (key, &count) in hist.iter().enumerate() {
        if below + count >= target {
            threshold = key as u16;
            break;
        }
        below += count;
    }
    let mut ties_left = target - below;
    let buf = out.data_mut();
    for i in 0..n {
        let key = data.magnitude_key(i);
        if key < threshold {
            buf.set_zero(i);
        } else if key == threshold && ties_left > 0 {
            buf.set_zero(i);
            ties_left -= 1;
        }
    }
    Ok(out)
}

/// Keeps the `n` largest-magnitude elements of every run of `m` consecutive
/// elements in a row. A trailing partial run is its own group.
pub fn nm_prune(w: &DenseMatrix, n: usize, m: usize) -> Result<DenseMatrix, GenError> {
    if n == 0 || n > m {
        return Err(GenError::InvalidPattern { n, m });
    }
    let mut out = w.clone();
    if n == m {
        return Ok(out);
    }
    let data = w.data();
    let cols = w.cols();
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for r in 0..w.rows() {
        let row_start = r * cols;
        let mut g = 0;
        while g < cols {
            let end = (g + m).min(cols);
            if end - g > n {
                order.clear();
                order.extend(row_start + g..row_start + end);
                // ascending magnitude, lower index first among ties: the head gets pruned
                order.sort_by_key(|&i| (data.magnitude_key(i), i));
                let prune = end - g - n;
                for &i in &order[..prune] {
                    out.data_mut().set_zero(i);
                }
            }
            g = end;
        }
    }
    Ok(out)
}

/// Fraction of elements equal to zero. An empty matrix has sparsity 0.
pub fn measure_sparsity(w: &DenseMatrix) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    w.count_zeros() as f64 / w.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(rows: usize, cols: usize) -> OpShape {
        OpShape::new("test", rows, cols, ElementType::F16)
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_weight(&shape(16, 16), 7).unwrap();
        let b = synth_weight(&shape(16, 16), 7).unwrap();
        assert_eq!(a, b);
        let c = synth_weight(&shape(16, 16), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_4x4_seed0_golden() {
        // frozen from the first run; guards the documented generator
        let w = synth_weight(&shape(4, 4), 0).unwrap();
        let ElementBuf::F16(bits) = w.data() else {
            unreachable!()
        };
        assert_eq!(bits.as_slice(), GOLDEN_4X4_SEED0);
        let i = synth_weight(&OpShape::new("t", 2, 4, ElementType::I8), 0).unwrap();
        assert_eq!(i.data(), &ElementBuf::I8(GOLDEN_I8_2X4_SEED0.to_vec()));
    }

    const GOLDEN_4X4_SEED0: &[u16] = &[
        13555, 14001, 14171, 44125, 9099, 13919, 12238, 47882, 47328, 14865, 12576, 11863, 45428,
        14660, 14637, 15096,
    ];
    const GOLDEN_I8_2X4_SEED0: &[i8] = &[39, 53, 59, -9, 2, 51, 16, -112];

    #[test]
    fn synth_is_roughly_zero_mean_and_bounded() {
        let w = synth_weight(&shape(128, 128), 3).unwrap();
        let vals: Vec<f32> = (0..w.len()).map(|i| w.data().get_f32(i)).collect();
        assert!(vals.iter().all(|v| (-1.0..=1.0).contains(v)));
        let mean = vals.iter().sum::<f32>() / vals.len() as f32;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn prune_zero_sparsity_is_identity() {
        let w = synth_weight(&shape(8, 8), 1).unwrap();
        assert_eq!(magnitude_prune(&w, 0.0).unwrap(), w);
    }

    #[test]
    fn prune_smallest_two() {
        let w = DenseMatrix::from_f32(1, 4, &[4.0, 1.0, 3.0, 2.0]).unwrap();
        let p = magnitude_prune(&w, 0.5).unwrap();
        assert_eq!(
            p,
            DenseMatrix::from_f32(1, 4, &[4.0, 0.0, 3.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn prune_ties_lower_index_first() {
        let w = DenseMatrix::from_f32(1, 5, &[2.0, -1.0, 1.0, 1.0, 3.0]).unwrap();
        let p = magnitude_prune(&w, 0.4).unwrap();
        assert_eq!(
            p,
            DenseMatrix::from_f32(1, 5, &[2.0, 0.0, 0.0, 1.0, 3.0]).unwrap()
        );
    }

    #[test]
    fn prune_hits_exact_count() {
        let w = synth_weight(&shape(33, 17), 4).unwrap();
        for s in [0.1, 0.5, 0.75, 0.99] {
            let p = magnitude_prune(&w, s).unwrap();
            assert_eq!(p.count_zeros(), (s * w.len() as f64).floor() as usize);
            let got = measure_sparsity(&p);
            assert!((got - s).abs() <= 1.0 / w.len() as f64);
        }
    }

    #[test]
    fn prune_rejects_full_sparsity() {
        let w = synth_weight(&shape(2, 2), 0).unwrap();
        assert!(magnitude_prune(&w, 1.0).is_err());
        assert!(magnitude_prune(&w, -0.1).is_err());
    }

    #[test]
    fn nm_examples() {
        let w = DenseMatrix::from_f32(1, 4, &[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(nm_prune(&w, 4, 4).unwrap(), w);
        assert_eq!(
            nm_prune(&w, 2, 4).unwrap(),
            DenseMatrix::from_f32(1, 4, &[4.0, 0.0, 3.0, 0.0]).unwrap()
        );
        assert!(nm_prune(&w, 0, 4).is_err());
        assert!(nm_prune(&w, 5, 4).is_err());
    }

    #[test]
    fn nm_partial_tail_group() {
        // groups [5,1,2,3] and [0.5,4,2]
        let w = DenseMatrix::from_f32(1, 7, &[5.0, 1.0, 2.0, 3.0, 0.5, 4.0, 2.0]).unwrap();
        let p = nm_prune(&w, 2, 4).unwrap();
        assert_eq!(
            p,
            DenseMatrix::from_f32(1, 7, &[5.0, 0.0, 0.0, 3.0, 0.0, 4.0, 2.0]).unwrap()
        );
    }

    #[test]
    fn sparsity_extremes() {
        assert_eq!(
            measure_sparsity(&DenseMatrix::zeros(3, 3, ElementType::I8).unwrap()),
            1.0
        );
        assert_eq!(
            measure_sparsity(&DenseMatrix::from_i8(1, 3, vec![1, 2, 3]).unwrap()),
            0.0
        );
    }

    proptest! {
        #[test]
        fn nm_groups_valid(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..40, n in 1usize..4, extra in 0usize..4) {
            let m = n + extra;
            let w = synth_weight(&shape(rows, cols), seed).unwrap();
            let p = nm_prune(&w, n, m).unwrap();
            for r in 0..rows {
                for g in (0..cols).step_by(m) {
                    let range = r * cols + g..r * cols + (g + m).min(cols);
                    let kept: Vec<usize> = range.clone().filter(|&i| !p.data().is_zero_at(i)).collect();
                    prop_assert!(kept.len() <= n);
                    let min_kept = kept.iter().map(|&i| w.data().magnitude_key(i)).min();
                    for i in range {
                        if p.data().is_zero_at(i) {
                            if let Some(mk) = min_kept {
                                prop_assert!(w.data().magnitude_key(i) <= mk);
                            }
                        }
                    }
                }
            }
        }

        #[test]
        fn magnitude_prune_exact(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20, s in 0.0f64..0.999) {
            let w = synth_weight(&OpShape::new("p", rows, cols, ElementType::I8), seed).unwrap();
            let p = magnitude_prune(&w, s).unwrap();
            let target = (s * w.len() as f64).floor() as usize;
            let already = w.count_zeros();
            prop_assert_eq!(p.count_zeros(), target.max(already));
        }
    }
}
