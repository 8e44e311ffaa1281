//! Sequential whole-file read timing.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::StoreError;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub label: String,
    pub bytes: u64,
    pub samples_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub bytes_per_second: f64,
    pub repetitions: usize,
    /// True only if every repetition successfully asked the kernel to evict the file's pages.
    pub cache_drop_attempted: bool,
}

#[cfg(target_os = "linux")]
fn drop_page_cache(file: &File) -> bool {
    use std::os::unix::io::AsRawFd;
    // dirty pages are not evicted, flush them first
    if file.sync_all().is_err() {
        return false;
    }
    // SAFETY: the descriptor is owned by `file` and stays open for the call.
    let rc = unsafe { libc::posix_fadvise(file.as_raw_fd(), 0, 0, libc::POSIX_FADV_DONTNEED) };
    rc == 0
}

#[cfg(not(target_os = "linux"))]
fn drop_page_cache(_file: &File) -> bool {
    false
}

fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    if s.len().is_multiple_of(2) {
        (s[mid - 1] + s[mid]) / 2.0
    } else {
        s[mid]
    }
}

/// Times `repetitions` full sequential reads of `path` into memory.
pub fn bench_read(
    path: impl AsRef<Path>,
    repetitions: usize,
    drop_cache: bool,
) -> Result<BenchReport, StoreError> {
    if repetitions == 0 {
        return Err(StoreError::InvalidArgument(
            "repetitions must be at least 1".into(),
        ));
    }
    let path = path.as_ref();
    let bytes = std::fs::metadata(path)?.len();
    let mut samples = Vec::with_capacity(repetitions);
    let mut dropped_all = drop_cache;
    let mut buf = Vec::with_capacity(bytes as usize);
    for _ in 0..repetitions {
        if drop_cache {
            let f = File::open(path)?;
            dropped_all &= drop_page_cache(&f);
        }
        buf.clear();
        let start = Instant::now();
        let mut f = File::open(path)?;
        f.read_to_end(&mut buf)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    let median_seconds = median(&samples);
    Ok(BenchReport {
        label: path.display().to_string(),
        bytes,
        bytes_per_second: bytes as f64 / median_seconds.max(f64::MIN_POSITIVE),
        samples_seconds: samples,
        median_seconds,
        repetitions,
        cache_drop_attempted: dropped_all,
    })
}
