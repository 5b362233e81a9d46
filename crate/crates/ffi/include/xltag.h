#ifndef XLTAG_H
#define XLTAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum XltagStatus {
  XLTAG_STATUS_OK = 0,
  XLTAG_STATUS_NULL_POINTER = 1,
  XLTAG_STATUS_INVALID_UTF8 = 2,
  XLTAG_STATUS_IO = 3,
  XLTAG_STATUS_INVALID_INPUT = 4,
  /*
   Model and embeddings (or tagsets) do not belong together.
   */
  XLTAG_STATUS_MISMATCH = 5,
  XLTAG_STATUS_NUMERICAL = 6,
  XLTAG_STATUS_BUFFER_TOO_SMALL = 7,
  XLTAG_STATUS_OUT_OF_RANGE = 8,
  XLTAG_STATUS_PANIC = 9,
} XltagStatus;

/*
 Which projection of an alignment to apply to loaded embeddings.
 */
typedef enum XltagSide {
  XLTAG_SIDE_SOURCE = 0,
  XLTAG_SIDE_TARGET = 1,
} XltagSide;

/*
 A trained tagger.
 */
typedef struct XltagModel XltagModel;

/*
 Word vectors, possibly projected into an aligned space.
 */
typedef struct XltagSpace XltagSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null if it succeeded.
 The string stays valid until the next call into this library on the same
 thread.
 */
const char *xltag_last_error(void);

/*
 Loads a model file written by `xltag train-source` or `train-joint`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum XltagStatus xltag_model_load(const char *path, struct XltagModel **out);

/*
 Releases a model. Null is ignored.

 # Safety
 `model` must come from [`xltag_model_load`] and not be used afterwards.
 */
void xltag_model_free(struct XltagModel *model);

/*
 Loads embeddings. With a non-null `alignment_dir` the vectors are
 projected by the `side` projection of that alignment.

 # Safety
 String arguments must be NUL-terminated (`alignment_dir` may be null) and
 `out` a valid pointer.
 */
enum XltagStatus xltag_space_load(const char *embeddings_path,
                                  const char *alignment_dir,
                                  enum XltagSide side,
                                  struct XltagSpace **out);

/*
 Releases a space. Null is ignored.

 # Safety
 `space` must come from [`xltag_space_load`] and not be used afterwards.
 */
void xltag_space_free(struct XltagSpace *space);

/*
 Size of the model's tagset.

 # Safety
 `model` must be a live model and `out` a valid pointer.
 */
enum XltagStatus xltag_model_num_tags(const struct XltagModel *model, size_t *out);

/*
 Copies the name of tag `index` into `buf` with a terminating NUL.
 `needed` (if non-null) receives the required size including the NUL, so
 callers can size the buffer with a first call using `buf_len = 0`.

 # Safety
 `model` must be a live model, `buf` valid for `buf_len` bytes (or null
 when `buf_len` is 0) and `needed` null or valid.
 */
enum XltagStatus xltag_model_tag_name(const struct XltagModel *model,
                                      size_t index,
                                      char *buf,
                                      size_t buf_len,
                                      size_t *needed);

/*
 Tags one sentence of `n_tokens` words, writing tag indices to `out_tags`.
 The gold head is used when the model was trained on gold labels, the
 distant head otherwise.

 # Safety
 `tokens` must point to `n_tokens` NUL-terminated strings and `out_tags`
 must have room for `n_tokens` values.
 */
enum XltagStatus xltag_predict(const struct XltagModel *model,
                               const struct XltagSpace *space,
                               const char *const *tokens,
                               size_t n_tokens,
                               size_t *out_tags);

/*
 Balancing weight between `gold_tokens` and `distant_tokens`.

 # Safety
 `out` must be a valid pointer.
 */
enum XltagStatus xltag_gamma(size_t gold_tokens, size_t distant_tokens, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XLTAG_H */
