#ifndef HSIM_H
#define HSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum HsimStatus {
  HSIM_STATUS_OK = 0,
  HSIM_STATUS_NULL_POINTER = 1,
  HSIM_STATUS_INVALID_UTF8 = 2,
  HSIM_STATUS_IO = 3,
  /**
   * The file is not a valid snapshot.
   */
  HSIM_STATUS_FORMAT = 4,
  HSIM_STATUS_INVALID_ARGUMENT = 5,
  HSIM_STATUS_OUT_OF_RANGE = 6,
  /**
   * The output buffer is too short; the required length was written.
   */
  HSIM_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * The document has no dictionary words; outputs hold the tie order.
   */
  HSIM_STATUS_EMPTY_DOCUMENT = 8,
  HSIM_STATUS_INTERNAL = 99,
} HsimStatus;

/**
 * A loaded snapshot.
 */
typedef struct HsimModel HsimModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hsim_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length, 0 when
 * there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t hsim_last_error(char *buf, uintptr_t len);

/**
 * Loads a snapshot file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HsimStatus hsim_model_load(const char *path, struct HsimModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from [`hsim_model_load`] and not be used afterwards.
 */
void hsim_model_free(struct HsimModel *model);

/**
 * Number of leaves, which is the length every ranking buffer needs.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HsimStatus hsim_model_leaf_count(const struct HsimModel *model, uintptr_t *out);

/**
 * Levels of the topic tree, root included.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HsimStatus hsim_model_height(const struct HsimModel *model, uintptr_t *out);

/**
 * Writes the `root / … / leaf` path of `leaf` into `buf` with a NUL. When
 * `len` is too short nothing is written, `*needed` gets the byte count
 * including the NUL and [`HsimStatus::BufferTooSmall`] is returned.
 *
 * # Safety
 * `buf` must point to `len` writable bytes (or be null with `len == 0`);
 * `needed` may be null.
 */
enum HsimStatus hsim_model_leaf_path(const struct HsimModel *model,
                                     uintptr_t leaf,
                                     char *buf,
                                     uintptr_t len,
                                     uintptr_t *needed);

/**
 * Ranks raw text: `order[i]` is the leaf at position `i`, `scores[i]` its
 * score (`scores` may be null). Both buffers hold exactly the leaf count.
 *
 * # Safety
 * `text` must be NUL-terminated; `order` and a non-null `scores` must
 * point to `len` writable elements.
 */
enum HsimStatus hsim_rank_text(const struct HsimModel *model,
                               const char *text,
                               uintptr_t *order,
                               double *scores,
                               uintptr_t len);

/**
 * Ranks a sparse count vector given as `nnz` (word index, count) pairs.
 *
 * # Safety
 * `indices` and `counts` must point to `nnz` elements (or be null with
 * `nnz == 0`); output buffers as for [`hsim_rank_text`].
 */
enum HsimStatus hsim_rank_counts(const struct HsimModel *model,
                                 const uint32_t *indices,
                                 const double *counts,
                                 uintptr_t nnz,
                                 uintptr_t *order,
                                 double *scores,
                                 uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSIM_H */
