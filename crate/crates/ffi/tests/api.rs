use std::ffi::{CStr, CString};
use std::ptr;

use endor_ffi::*;

fn last_error() -> String {
    let p = endor_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn f16_roundtrip_through_handles() {
    // 1.0, 0, -2.0, 0, 0.5, -0.0
    let bits: [u16; 6] = [0x3c00, 0, 0xc000, 0, 0x3800, 0x8000];
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(
            endor_matrix_new_f16(2, 3, bits.as_ptr(), 6, &mut m),
            EndorStatus::Ok
        );
        assert_eq!(endor_matrix_rows(m), 2);
        assert_eq!(endor_matrix_cols(m), 3);
        assert_eq!(endor_matrix_dtype(m), EndorDtype::F16);

        let mut t = ptr::null_mut();
        assert_eq!(endor_compress(m, &mut t), EndorStatus::Ok);
        assert_eq!(endor_tensor_nnz(t), 3);
        assert_eq!(endor_tensor_compressed_bytes(t), 1 + 3 * 2);
        assert_eq!(endor_tensor_dense_bytes(t), 12);

        let mut back = ptr::null_mut();
        assert_eq!(endor_decompress(t, &mut back), EndorStatus::Ok);
        let mut out = [0xffffu16; 6];
        assert_eq!(
            endor_matrix_copy_f16(back, out.as_mut_ptr(), 6),
            EndorStatus::Ok
        );
        // negative zero reads back as positive zero
        assert_eq!(out, [0x3c00, 0, 0xc000, 0, 0x3800, 0]);

        endor_matrix_free(back);
        endor_tensor_free(t);
        endor_matrix_free(m);
    }
}

#[test]
fn file_roundtrip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.endor");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let vals: Vec<i8> = (0..64)
        .map(|i| if i % 3 == 0 { 0 } else { i as i8 - 30 })
        .collect();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(
            endor_matrix_new_i8(8, 8, vals.as_ptr(), 64, &mut m),
            EndorStatus::Ok
        );
        let mut t = ptr::null_mut();
        assert_eq!(endor_compress(m, &mut t), EndorStatus::Ok);
        assert_eq!(endor_tensor_write_file(t, cpath.as_ptr()), EndorStatus::Ok);

        let mut r = ptr::null_mut();
        assert_eq!(
            endor_tensor_read_file(cpath.as_ptr(), &mut r),
            EndorStatus::Ok
        );
        assert_eq!(endor_tensor_nnz(r), endor_tensor_nnz(t));
        endor_tensor_free(r);

        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        std::fs::write(&path, &bytes).unwrap();
        let mut r = ptr::null_mut();
        assert_eq!(
            endor_tensor_read_file(cpath.as_ptr(), &mut r),
            EndorStatus::Crc
        );
        assert!(r.is_null());
        assert!(last_error().contains("CRC"));

        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(
            endor_tensor_read_file(cpath.as_ptr(), &mut r),
            EndorStatus::BadMagic
        );

        endor_tensor_free(t);
        endor_matrix_free(m);
    }
}

#[test]
fn argument_errors() {
    unsafe {
        let mut m = ptr::null_mut();
        let vals = [1i8; 4];
        assert_eq!(
            endor_matrix_new_i8(3, 3, vals.as_ptr(), 4, &mut m),
            EndorStatus::Shape
        );
        assert!(m.is_null());
        assert_eq!(
            endor_matrix_new_i8(2, 2, vals.as_ptr(), 4, ptr::null_mut()),
            EndorStatus::NullPointer
        );
        assert_eq!(
            endor_matrix_new_i8(2, 2, ptr::null(), 4, &mut m),
            EndorStatus::NullPointer
        );
        assert_eq!(
            endor_matrix_new_i8(2, 2, vals.as_ptr(), 4, &mut m),
            EndorStatus::Ok
        );
        let mut small = [0i8; 3];
        assert_eq!(
            endor_matrix_copy_i8(m, small.as_mut_ptr(), 3),
            EndorStatus::InvalidArgument
        );
        let mut wrong = [0u16; 4];
        assert_eq!(
            endor_matrix_copy_f16(m, wrong.as_mut_ptr(), 4),
            EndorStatus::InvalidArgument
        );
        assert!(last_error().contains("not f16"));
        endor_matrix_free(m);
        endor_matrix_free(ptr::null_mut());
        endor_tensor_free(ptr::null_mut());
    }
}

#[test]
fn simulation_through_c_strings() {
    let model = CString::new("opt-66b").unwrap();
    let mut secs = 0.0;
    unsafe {
        let dense = CString::new("dense").unwrap();
        assert_eq!(
            endor_simulate_total(model.as_ptr(), 5, 8, 51, dense.as_ptr(), 0.5, &mut secs),
            EndorStatus::Ok
        );
        assert!((secs - 54.0).abs() < 1e-6, "{secs}");
        let endor = CString::new("endor").unwrap();
        let mut e = 0.0;
        assert_eq!(
            endor_simulate_total(model.as_ptr(), 5, 8, 51, endor.as_ptr(), 0.5, &mut e),
            EndorStatus::Ok
        );
        assert!(e < secs);
        assert_eq!(
            endor_simulate_total(model.as_ptr(), 5, 8, 50, endor.as_ptr(), 0.5, &mut e),
            EndorStatus::Simulation
        );
        let bad = CString::new("nope").unwrap();
        assert_eq!(
            endor_simulate_total(bad.as_ptr(), 5, 8, 51, endor.as_ptr(), 0.5, &mut e),
            EndorStatus::InvalidArgument
        );
    }
    assert_eq!(endor_compression_ratio(EndorDtype::I8, 0.5), 0.625);
}
