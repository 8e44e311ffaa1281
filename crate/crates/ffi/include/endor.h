#ifndef ENDOR_H
#define ENDOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EndorDtype {
  ENDOR_DTYPE_F16 = 0,
  ENDOR_DTYPE_I8 = 1,
} EndorDtype;

typedef enum EndorStatus {
  ENDOR_STATUS_OK = 0,
  ENDOR_STATUS_NULL_POINTER = 1,
  ENDOR_STATUS_INVALID_ARGUMENT = 2,
  ENDOR_STATUS_SHAPE = 3,
  ENDOR_STATUS_CORRUPT = 4,
  ENDOR_STATUS_IO = 5,
  ENDOR_STATUS_CRC = 6,
  ENDOR_STATUS_BAD_MAGIC = 7,
  ENDOR_STATUS_UNSUPPORTED_VERSION = 8,
  ENDOR_STATUS_SIMULATION = 9,
  ENDOR_STATUS_PANIC = 10,
} EndorStatus;

/**
 * Dense row-major weight matrix.
 */
typedef struct EndorMatrix EndorMatrix;

/**
 * Bitmap-compressed weight matrix.
 */
typedef struct EndorTensor EndorTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *endor_last_error_message(void);

/**
 * Static description of a status code.
 */
const char *endor_status_string(enum EndorStatus status);

const char *endor_version(void);

/**
 * Stored size over dense size for a matrix of `dtype` at `sparsity`.
 */
double endor_compression_ratio(enum EndorDtype dtype, double sparsity);

/**
 * Creates a matrix from `rows * cols` raw F16 bit patterns.
 *
 * # Safety
 * `bits` must point to `len` readable values and `out` must be writable.
 */
enum EndorStatus endor_matrix_new_f16(size_t rows,
                                      size_t cols,
                                      const uint16_t *bits,
                                      size_t len,
                                      struct EndorMatrix **out);

/**
 * Creates a matrix from `rows * cols` INT8 values.
 *
 * # Safety
 * `values` must point to `len` readable values and `out` must be writable.
 */
enum EndorStatus endor_matrix_new_i8(size_t rows,
                                     size_t cols,
                                     const int8_t *values,
                                     size_t len,
                                     struct EndorMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void endor_matrix_free(struct EndorMatrix *m);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t endor_matrix_rows(const struct EndorMatrix *m);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t endor_matrix_cols(const struct EndorMatrix *m);

/**
 * # Safety
 * `m` must be a live handle.
 */
enum EndorDtype endor_matrix_dtype(const struct EndorMatrix *m);

/**
 * Copies the F16 bit patterns of `m` into `dst`, which must hold exactly
 * `rows * cols` elements.
 *
 * # Safety
 * `m` must be a live handle and `dst` must have room for `len` values.
 */
enum EndorStatus endor_matrix_copy_f16(const struct EndorMatrix *m, uint16_t *dst, size_t len);

/**
 * Copies the INT8 values of `m` into `dst`, which must hold exactly
 * `rows * cols` elements.
 *
 * # Safety
 * `m` must be a live handle and `dst` must have room for `len` values.
 */
enum EndorStatus endor_matrix_copy_i8(const struct EndorMatrix *m, int8_t *dst, size_t len);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum EndorStatus endor_compress(const struct EndorMatrix *m, struct EndorTensor **out);

/**
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum EndorStatus endor_decompress(const struct EndorTensor *t, struct EndorMatrix **out);

/**
 * # Safety
 * `t` must be null or a handle from this library not yet freed.
 */
void endor_tensor_free(struct EndorTensor *t);

/**
 * # Safety
 * `t` must be a live handle.
 */
size_t endor_tensor_nnz(const struct EndorTensor *t);

/**
 * Bitmap plus value bytes, excluding any container framing.
 *
 * # Safety
 * `t` must be a live handle.
 */
size_t endor_tensor_compressed_bytes(const struct EndorTensor *t);

/**
 * # Safety
 * `t` must be a live handle.
 */
size_t endor_tensor_dense_bytes(const struct EndorTensor *t);

/**
 * Writes `t` as a `.endor` file.
 *
 * # Safety
 * `t` must be a live handle and `path` a NUL-terminated string.
 */
enum EndorStatus endor_tensor_write_file(const struct EndorTensor *t, const char *path);

/**
 * Reads and validates a `.endor` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum EndorStatus endor_tensor_read_file(const char *path, struct EndorTensor **out);

/**
 * Simulated forward-pass seconds for a catalog model under the default
 * profile, with the first `gpu` layers on the GPU, the next `cpu` in host
 * memory and the rest on storage.
 *
 * # Safety
 * `model` and `mode` must be NUL-terminated strings and `out_seconds` writable.
 */
enum EndorStatus endor_simulate_total(const char *model,
                                      size_t gpu,
                                      size_t cpu,
                                      size_t ssd,
                                      const char *mode,
                                      double sparsity,
                                      double *out_seconds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENDOR_H */
