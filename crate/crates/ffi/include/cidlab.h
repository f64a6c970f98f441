#ifndef CIDLAB_H
#define CIDLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CidStatus {
  CID_STATUS_OK = 0,
  CID_STATUS_NULL_POINTER = 1,
  CID_STATUS_INVALID_ARGUMENT = 2,
  CID_STATUS_SHAPE_MISMATCH = 3,
  CID_STATUS_NON_FINITE = 4,
  CID_STATUS_IO = 5,
  CID_STATUS_VERSION_MISMATCH = 6,
  CID_STATUS_CORRUPT_CHECKSUM = 7,
  CID_STATUS_EMPTY_NEGATIVES = 8,
  CID_STATUS_CONFIG = 9,
  CID_STATUS_FAILED = 10,
  CID_STATUS_PANIC = 11,
} CidStatus;

/**
 * Opaque handle to a frozen query encoder loaded from a checkpoint.
 */
typedef struct CidEncoder CidEncoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or "" after a success.
 * The pointer stays valid until the next cidlab call on this thread.
 */
const char *cid_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cid_version(void);

/**
 * Number of negatives in a fractional band over `k` ranked negatives:
 * `max(1, round(fraction * k))`. Returns 0 if `fraction` is outside (0, 1].
 */
size_t cid_band_count(double fraction, size_t k);

/**
 * InfoNCE loss for one query. `negatives` is row-major, `n_negatives × dim`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths; `out_loss` must be writable.
 */
enum CidStatus cid_info_nce_loss(const double *query,
                                 const double *positive,
                                 const double *negatives,
                                 size_t n_negatives,
                                 size_t dim,
                                 double tau,
                                 double *out_loss);

/**
 * Gradient of the InfoNCE loss with respect to the query, written to
 * `out_grad` (`dim` entries).
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum CidStatus cid_info_nce_grad(const double *query,
                                 const double *positive,
                                 const double *negatives,
                                 size_t n_negatives,
                                 size_t dim,
                                 double tau,
                                 double *out_grad);

/**
 * Ranks negatives by dot product with the query, hardest first. Equal dots
 * keep the lower index first, so pass the oldest negative at index 0 to get
 * queue order. Writes `n_negatives` indices to `out_order`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum CidStatus cid_rank_difficulty(const double *query,
                                   const double *negatives,
                                   size_t n_negatives,
                                   size_t dim,
                                   size_t *out_order);

/**
 * Loads the query encoder from a checkpoint file. On success `*out` owns a
 * handle that must be released with [`cid_encoder_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CidStatus cid_encoder_load(const char *path, struct CidEncoder **out);

/**
 * Releases a handle from [`cid_encoder_load`]. Null is a no-op.
 *
 * # Safety
 * `enc` must be null or a live handle, not freed twice.
 */
void cid_encoder_free(struct CidEncoder *enc);

/**
 * Input, representation and embedding widths of the encoder. Any output
 * pointer may be null.
 *
 * # Safety
 * `enc` must be a live handle.
 */
enum CidStatus cid_encoder_dims(const struct CidEncoder *enc,
                                size_t *input_dim,
                                size_t *repr_dim,
                                size_t *embed_dim);

/**
 * Unit-norm embedding of one input (`embed_dim` outputs).
 *
 * # Safety
 * `enc` must be a live handle; buffers must have the stated lengths.
 */
enum CidStatus cid_encoder_embed(const struct CidEncoder *enc,
                                 const double *x,
                                 size_t x_len,
                                 double *out,
                                 size_t out_len);

/**
 * Base-network representation of one input (`repr_dim` outputs), the
 * features a linear probe sees.
 *
 * # Safety
 * `enc` must be a live handle; buffers must have the stated lengths.
 */
enum CidStatus cid_encoder_represent(const struct CidEncoder *enc,
                                     const double *x,
                                     size_t x_len,
                                     double *out,
                                     size_t out_len);

/**
 * Runs one experiment from `key = value` config text: pre-training, probe
 * and the configured analyses. Artifacts go to `out_dir` unless it is null.
 * The probe top-1 accuracy is written to `out_top1` when non-null.
 *
 * # Safety
 * `config_text` must be NUL-terminated; `out_dir` null or NUL-terminated.
 */
enum CidStatus cid_run_config(const char *config_text, const char *out_dir, double *out_top1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIDLAB_H */
