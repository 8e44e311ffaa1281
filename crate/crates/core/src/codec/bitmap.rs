//! Position bitmap and the chunked prefix-popcount index over it.
//!
//! Bits are stored LSB-first: bit `b` of byte `k` marks element `8k + b`.
//! Bits past `len` in the final byte are always zero.

use super::CodecError;

/// One bit per matrix element, set where the element is non-zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    len: usize,
    bytes: Vec<u8>,
}

impl Bitmap {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    /// Wraps raw storage. Fails if the byte count is wrong or padding bits are set.
    pub fn from_bytes(len: usize, bytes: Vec<u8>) -> Result<Self, CodecError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(CodecError::Corrupt(format!(
                "bitmap has {} bytes, expected {} for {len} bits",
                bytes.len(),
                len.div_ceil(8)
            )));
        }
        if !len.is_multiple_of(8) {
            let last = bytes[bytes.len() - 1];
            if last >> (len % 8) != 0 {
                return Err(CodecError::Corrupt("bitmap padding bits are set".into()));
            }
        }
        Ok(Self { len, bytes })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.bytes[i >> 3] >> (i & 7) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.bytes[i >> 3] |= 1 << (i & 7);
    }

    pub fn count_ones(&self) -> usize {
        popcount_bytes(&self.bytes)
    }

    /// Number of set bits in `[0, pos)`, by scanning.
    pub fn rank_scan(&self, pos: usize) -> usize {
        self.count_range(0, pos)
    }

    /// Number of set bits in `[start, end)`.
    pub fn count_range(&self, start: usize, end: usize) -> usize {
        debug_assert!(start <= end && end <= self.len);
        if start == end {
            return 0;
        }
        let (sb, eb) = (start >> 3, end >> 3);
        if sb == eb {
            let byte = self.bytes[sb] as u32;
            let mask = ((1u32 << (end & 7)) - 1) & !((1u32 << (start & 7)) - 1);
            return (byte & mask).count_ones() as usize;
        }
        let head = (self.bytes[sb] >> (start & 7)).count_ones() as usize;
        let middle = popcount_bytes(&self.bytes[sb + 1..eb]);
        let tail = if end & 7 == 0 {
            0
        } else {
            (self.bytes[eb] & ((1u8 << (end & 7)) - 1)).count_ones() as usize
        };
        head + middle + tail
    }

    /// Calls `f(i)` for every set bit `i` in `[start, end)`, in increasing order.
    /// `start` must be a multiple of 8.
    #[inline]
    pub(crate) fn for_each_one(&self, start: usize, end: usize, mut f: impl FnMut(usize)) {
        debug_assert!(start.is_multiple_of(8));
        let bytes = &self.bytes[start >> 3..end.div_ceil(8)];
        let mut words = bytes.chunks_exact(8);
        let mut base = start;
        for w in words.by_ref() {
            let mut word = u64::from_le_bytes(w.try_into().unwrap());
            while word != 0 {
                let tz = word.trailing_zeros() as usize;
                let i = base + tz;
                if i >= end {
                    return;
                }
                f(i);
                word &= word - 1;
            }
            base += 64;
        }
        for &b in words.remainder() {
            let mut byte = b;
            while byte != 0 {
                let i = base + byte.trailing_zeros() as usize;
                if i >= end {
                    return;
                }
                f(i);
                byte &= byte - 1;
            }
            base += 8;
        }
    }
}

pub(crate) fn popcount_bytes(bytes: &[u8]) -> usize {
    let mut words = bytes.chunks_exact(8);
    let mut total: usize = words
        .by_ref()
        .map(|w| u64::from_le_bytes(w.try_into().unwrap()).count_ones() as usize)
        .sum();
    total += words
        .remainder()
        .iter()
        .map(|b| b.count_ones() as usize)
        .sum::<usize>();
    total
}

/// Default number of elements per decompression chunk.
pub const DEFAULT_CHUNK_SIZE: usize = 4096;

/// Exclusive prefix sums of per-chunk popcounts.
///
/// `prefix[k]` is the number of set bits before chunk `k`, which is also the
/// offset of chunk `k`'s first stored value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankIndex {
    chunk_size: usize,
    bit_len: usize,
    total: usize,
    prefix: Vec<usize>,
}

impl RankIndex {
    /// Builds the index over `bitmap`. `chunk_size` must be a power of two, at least 64.
    pub fn build(bitmap: &Bitmap, chunk_size: usize) -> Result<Self, CodecError> {
        if chunk_size < 64 || !chunk_size.is_power_of_two() {
            return Err(CodecError::InvalidChunkSize(chunk_size));
        }
        let chunk_bytes = chunk_size / 8;
        let mut prefix = Vec::with_capacity(bitmap.len().div_ceil(chunk_size));
        let mut running = 0;
        for chunk in bitmap.as_bytes().chunks(chunk_bytes) {
            prefix.push(running);
            running += popcount_bytes(chunk);
        }
        Ok(Self {
            chunk_size,
            bit_len: bitmap.len(),
            total: running,
            prefix,
        })
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn prefix(&self) -> &[usize] {
        &self.prefix
    }

    pub fn num_chunks(&self) -> usize {
        self.prefix.len()
    }

    /// Total number of set bits covered by the index.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    /// Element range `[start, end)` covered by chunk `k`.
    pub fn chunk_range(&self, k: usize) -> (usize, usize) {
        let start = k * self.chunk_size;
        (start, (start + self.chunk_size).min(self.bit_len))
    }

    /// Number of set bits in `[0, pos)`, using the index plus a partial scan.
    pub fn rank(&self, bitmap: &Bitmap, pos: usize) -> usize {
        if pos >= self.bit_len {
            return self.total;
        }
        let k = pos / self.chunk_size;
        self.prefix[k] + bitmap.count_range(k * self.chunk_size, pos)
    }

    /// Checks that the index was built over `bitmap` and the given value count.
    pub(crate) fn check_against(&self, bitmap: &Bitmap, nnz: usize) -> Result<(), CodecError> {
        if self.bit_len != bitmap.len() || self.total != nnz {
            return Err(CodecError::IndexMismatch);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn alternating(len: usize) -> Bitmap {
        let mut b = Bitmap::zeros(len);
        (0..len).step_by(2).for_each(|i| b.set(i));
        b
    }

    #[test]
    fn alternating_prefix() {
        let idx = RankIndex::build(&alternating(256), 64).unwrap();
        assert_eq!(idx.prefix(), &[0, 32, 64, 96]);
        assert_eq!(idx.total(), 128);
    }

    #[test]
    fn all_zero_prefix() {
        let idx = RankIndex::build(&Bitmap::zeros(1000), 128).unwrap();
        assert!(idx.prefix().iter().all(|&p| p == 0));
        assert_eq!(idx.num_chunks(), 8);
    }

    #[test]
    fn rejects_bad_chunk_sizes() {
        let b = Bitmap::zeros(10);
        for cs in [0, 1, 32, 63, 100, 4095] {
            assert_eq!(
                RankIndex::build(&b, cs),
                Err(CodecError::InvalidChunkSize(cs))
            );
        }
    }

    #[test]
    fn random_prefix_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let len = 10_007;
        let mut b = Bitmap::zeros(len);
        for i in 0..len {
            if rng.gen_bool(0.37) {
                b.set(i);
            }
        }
        for cs in [64, 256, 4096] {
            let idx = RankIndex::build(&b, cs).unwrap();
            for (k, &p) in idx.prefix().iter().enumerate() {
                let oracle = (0..k * cs).filter(|&i| b.get(i)).count();
                assert_eq!(p, oracle, "chunk {k} of size {cs}");
            }
            for pos in [0, 1, 7, 8, 63, 64, 65, 5000, len - 1, len] {
                let oracle = (0..pos).filter(|&i| b.get(i)).count();
                assert_eq!(idx.rank(&b, pos), oracle);
                assert_eq!(b.rank_scan(pos), oracle);
            }
        }
    }

    #[test]
    fn count_range_within_one_byte() {
        let b = Bitmap::from_bytes(16, vec![0b1011_0110, 0xff]).unwrap();
        assert_eq!(b.count_range(1, 3), 2);
        assert_eq!(b.count_range(3, 3), 0);
        assert_eq!(b.count_range(0, 8), 5);
        assert_eq!(b.count_range(5, 12), 6);
    }

    #[test]
    fn for_each_one_visits_in_order() {
        let mut b = Bitmap::zeros(200);
        let set = [0, 3, 63, 64, 130, 199];
        set.iter().for_each(|&i| b.set(i));
        let mut seen = Vec::new();
        b.for_each_one(0, 200, |i| seen.push(i));
        assert_eq!(seen, set);
        seen.clear();
        b.for_each_one(64, 131, |i| seen.push(i));
        assert_eq!(seen, [64, 130]);
    }

    #[test]
    fn padding_bits_rejected() {
        assert!(Bitmap::from_bytes(4, vec![0b0001_0000]).is_err());
        assert!(Bitmap::from_bytes(4, vec![0b0000_1111]).is_ok());
        assert!(Bitmap::from_bytes(9, vec![0]).is_err());
    }
}
