//! C interface to `endor-core`.
//!
//! Matrices and compressed tensors are opaque handles created by this library
//! and released with the matching `*_free` function. Every fallible call
//! returns an [`EndorStatus`]; on failure a description is available from
//! [`endor_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use endor_core::codec::CodecError;
use endor_core::gen::{model_catalog, GenError};
use endor_core::matrix::ShapeError;
use endor_core::sim::{calibrate_default_profile, simulate_pass, DeviceMap, ExecMode, SimError};
use endor_core::store::{read_endor_file, write_endor_file, StoreError};
use endor_core::{DenseMatrix, ElementBuf, ElementType};

/// Dense row-major weight matrix.
pub struct EndorMatrix(DenseMatrix);

/// Bitmap-compressed weight matrix.
pub struct EndorTensor(endor_core::EndorTensor);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndorStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Corrupt = 4,
    Io = 5,
    Crc = 6,
    BadMagic = 7,
    UnsupportedVersion = 8,
    Simulation = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndorDtype {
    F16 = 0,
    I8 = 1,
}

impl From<ElementType> for EndorDtype {
    fn from(d: ElementType) -> Self {
        match d {
            ElementType::F16 => EndorDtype::F16,
            ElementType::I8 => EndorDtype::I8,
        }
    }
}

impl From<EndorDtype> for ElementType {
    fn from(d: EndorDtype) -> Self {
        match d {
            EndorDtype::F16 => ElementType::F16,
            EndorDtype::I8 => ElementType::I8,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(EndorStatus, String);

impl Fail {
    fn new(status: EndorStatus, msg: impl Into<String>) -> Self {
        Fail(status, msg.into())
    }
}

impl From<CodecError> for Fail {
    fn from(e: CodecError) -> Self {
        let status = match e {
            CodecError::Shape(_) | CodecError::OutOfBounds { .. } => EndorStatus::Shape,
            CodecError::InvalidChunkSize(_)
            | CodecError::UnsortedSelection
            | CodecError::DtypeMismatch { .. }
            | CodecError::NonFinite(_) => EndorStatus::InvalidArgument,
            _ => EndorStatus::Corrupt,
        };
        Fail(status, e.to_string())
    }
}

impl From<StoreError> for Fail {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::Io(_) => EndorStatus::Io,
            StoreError::Crc { .. } | StoreError::Truncated(_) => EndorStatus::Crc,
            StoreError::BadMagic { .. } => EndorStatus::BadMagic,
            StoreError::UnsupportedVersion(_) => EndorStatus::UnsupportedVersion,
            StoreError::InvalidArgument(_) => EndorStatus::InvalidArgument,
            StoreError::Shape(_) => EndorStatus::Shape,
            _ => EndorStatus::Corrupt,
        };
        Fail(status, e.to_string())
    }
}

impl From<ShapeError> for Fail {
    fn from(e: ShapeError) -> Self {
        Fail(EndorStatus::Shape, e.to_string())
    }
}

impl From<SimError> for Fail {
    fn from(e: SimError) -> Self {
        Fail(EndorStatus::Simulation, e.to_string())
    }
}

impl From<GenError> for Fail {
    fn from(e: GenError) -> Self {
        Fail(EndorStatus::InvalidArgument, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EndorStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EndorStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EndorStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::new(
            EndorStatus::NullPointer,
            format!("{what} is null"),
        ))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    non_null(p, what)?;
    // SAFETY: caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail::new(EndorStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    // SAFETY: caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    // SAFETY: `out` was checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn endor_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn endor_status_string(status: EndorStatus) -> *const c_char {
    let s: &'static CStr = match status {
        EndorStatus::Ok => c"ok",
        EndorStatus::NullPointer => c"null pointer argument",
        EndorStatus::InvalidArgument => c"invalid argument",
        EndorStatus::Shape => c"shape error",
        EndorStatus::Corrupt => c"corrupt data",
        EndorStatus::Io => c"i/o error",
        EndorStatus::Crc => c"CRC mismatch",
        EndorStatus::BadMagic => c"bad magic",
        EndorStatus::UnsupportedVersion => c"unsupported format version",
        EndorStatus::Simulation => c"simulation error",
        EndorStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

#[no_mangle]
pub extern "C" fn endor_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Stored size over dense size for a matrix of `dtype` at `sparsity`.
#[no_mangle]
pub extern "C" fn endor_compression_ratio(dtype: EndorDtype, sparsity: f64) -> f64 {
    endor_core::compression_ratio(dtype.into(), sparsity)
}

/// Creates a matrix from `rows * cols` raw F16 bit patterns.
///
/// # Safety
/// `bits` must point to `len` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_new_f16(
    rows: usize,
    cols: usize,
    bits: *const u16,
    len: usize,
    out: *mut *mut EndorMatrix,
) -> EndorStatus {
    guard(|| {
        non_null(out, "out")?;
        let data = unsafe { slice_arg(bits, len, "bits")? }.to_vec();
        let m = DenseMatrix::from_f16_bits(rows, cols, data)?;
        unsafe { put(out, EndorMatrix(m)) };
        Ok(())
    })
}

/// Creates a matrix from `rows * cols` INT8 values.
///
/// # Safety
/// `values` must point to `len` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_new_i8(
    rows: usize,
    cols: usize,
    values: *const i8,
    len: usize,
    out: *mut *mut EndorMatrix,
) -> EndorStatus {
    guard(|| {
        non_null(out, "out")?;
        let data = unsafe { slice_arg(values, len, "values")? }.to_vec();
        let m = DenseMatrix::from_i8(rows, cols, data)?;
        unsafe { put(out, EndorMatrix(m)) };
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_free(m: *mut EndorMatrix) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_rows(m: *const EndorMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_cols(m: *const EndorMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.cols())
}

/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_dtype(m: *const EndorMatrix) -> EndorDtype {
    unsafe { m.as_ref() }.map_or(EndorDtype::F16, |m| m.0.dtype().into())
}

/// Copies the F16 bit patterns of `m` into `dst`, which must hold exactly
/// `rows * cols` elements.
///
/// # Safety
/// `m` must be a live handle and `dst` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_copy_f16(
    m: *const EndorMatrix,
    dst: *mut u16,
    len: usize,
) -> EndorStatus {
    guard(|| {
        non_null(m, "matrix")?;
        let m = unsafe { &(*m).0 };
        let ElementBuf::F16(src) = m.data() else {
            return Err(Fail::new(EndorStatus::InvalidArgument, "matrix is not f16"));
        };
        copy_out(src, dst, len)
    })
}

/// Copies the INT8 values of `m` into `dst`, which must hold exactly
/// `rows * cols` elements.
///
/// # Safety
/// `m` must be a live handle and `dst` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn endor_matrix_copy_i8(
    m: *const EndorMatrix,
    dst: *mut i8,
    len: usize,
) -> EndorStatus {
    guard(|| {
        non_null(m, "matrix")?;
        let m = unsafe { &(*m).0 };
        let ElementBuf::I8(src) = m.data() else {
            return Err(Fail::new(EndorStatus::InvalidArgument, "matrix is not i8"));
        };
        copy_out(src, dst, len)
    })
}

fn copy_out<T: Copy>(src: &[T], dst: *mut T, len: usize) -> Result<(), Fail> {
    if len != src.len() {
        return Err(Fail::new(
            EndorStatus::InvalidArgument,
            format!("destination holds {len} elements, matrix has {}", src.len()),
        ));
    }
    if len == 0 {
        return Ok(());
    }
    non_null(dst, "dst")?;
    // SAFETY: caller guarantees `len` writable elements at `dst`; the regions are distinct.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, len) };
    Ok(())
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn endor_compress(
    m: *const EndorMatrix,
    out: *mut *mut EndorTensor,
) -> EndorStatus {
    guard(|| {
        non_null(m, "matrix")?;
        non_null(out, "out")?;
        let t = endor_core::compress(unsafe { &(*m).0 });
        unsafe { put(out, EndorTensor(t)) };
        Ok(())
    })
}

/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn endor_decompress(
    t: *const EndorTensor,
    out: *mut *mut EndorMatrix,
) -> EndorStatus {
    guard(|| {
        non_null(t, "tensor")?;
        non_null(out, "out")?;
        let m = endor_core::decompress(unsafe { &(*t).0 })?;
        unsafe { put(out, EndorMatrix(m)) };
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn endor_tensor_free(t: *mut EndorTensor) {
    if !t.is_null() {
        drop(unsafe { Box::from_raw(t) });
    }
}

/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn endor_tensor_nnz(t: *const EndorTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.0.nnz())
}

/// Bitmap plus value bytes, excluding any container framing.
///
/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn endor_tensor_compressed_bytes(t: *const EndorTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.0.compressed_bytes())
}

/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn endor_tensor_dense_bytes(t: *const EndorTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.0.dense_bytes())
}

/// Writes `t` as a `.endor` file.
///
/// # Safety
/// `t` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn endor_tensor_write_file(
    t: *const EndorTensor,
    path: *const c_char,
) -> EndorStatus {
    guard(|| {
        non_null(t, "tensor")?;
        let path = unsafe { str_arg(path, "path")? };
        write_endor_file(unsafe { &(*t).0 }, path)?;
        Ok(())
    })
}

/// Reads and validates a `.endor` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn endor_tensor_read_file(
    path: *const c_char,
    out: *mut *mut EndorTensor,
) -> EndorStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = unsafe { str_arg(path, "path")? };
        let t = read_endor_file(path)?;
        unsafe { put(out, EndorTensor(t)) };
        Ok(())
    })
}

/// Simulated forward-pass seconds for a catalog model under the default
/// profile, with the first `gpu` layers on the GPU, the next `cpu` in host
/// memory and the rest on storage.
///
/// # Safety
/// `model` and `mode` must be NUL-terminated strings and `out_seconds` writable.
#[no_mangle]
pub unsafe extern "C" fn endor_simulate_total(
    model: *const c_char,
    gpu: usize,
    cpu: usize,
    ssd: usize,
    mode: *const c_char,
    sparsity: f64,
    out_seconds: *mut f64,
) -> EndorStatus {
    guard(|| {
        non_null(out_seconds, "out_seconds")?;
        let spec = model_catalog(unsafe { str_arg(model, "model")? })?;
        let mode: ExecMode = unsafe { str_arg(mode, "mode")? }.parse()?;
        let map = DeviceMap::from_counts(gpu, cpu, ssd);
        let r = simulate_pass(&spec, &map, mode, &calibrate_default_profile(), sparsity)?;
        unsafe { *out_seconds = r.total_seconds };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_strings_are_static() {
        let s = unsafe { CStr::from_ptr(endor_status_string(EndorStatus::Crc)) };
        assert_eq!(s.to_str().unwrap(), "CRC mismatch");
    }

    #[test]
    fn version_matches_package() {
        let v = unsafe { CStr::from_ptr(endor_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), EndorStatus::Panic);
        let msg = unsafe { CStr::from_ptr(endor_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }
}
