#ifndef DSVB_H
#define DSVB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsvbActuation {
  DSVB_ACTUATION_OSCILLATORY = 0,
  DSVB_ACTUATION_RANDOM = 1,
} DsvbActuation;

typedef enum DsvbContactMode {
  DSVB_CONTACT_MODE_TIP = 0,
  DSVB_CONTACT_MODE_SURFACE = 1,
} DsvbContactMode;

typedef enum DsvbStatus {
  DSVB_STATUS_OK = 0,
  DSVB_STATUS_NULL_POINTER = 1,
  DSVB_STATUS_INVALID_ARGUMENT = 2,
  DSVB_STATUS_IO = 3,
  DSVB_STATUS_PARSE = 4,
  DSVB_STATUS_SHAPE_MISMATCH = 5,
  DSVB_STATUS_CHECKPOINT = 6,
  DSVB_STATUS_NUMERICAL = 7,
  DSVB_STATUS_BUFFER_TOO_SMALL = 8,
  DSVB_STATUS_PANIC = 9,
} DsvbStatus;

/**
 * A time series of measurements and optional state labels.
 */
typedef struct DsvbDataset DsvbDataset;

/**
 * A loaded checkpoint ready for inference.
 */
typedef struct DsvbModel DsvbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next dsvb call on the same thread.
 */
const char *dsvb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dsvb_version(void);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DsvbStatus dsvb_model_load(const char *path, struct DsvbModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must come from `dsvb_model_load` and not be used afterwards.
 */
void dsvb_model_free(struct DsvbModel *model);

/**
 * Number of measurement channels, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t dsvb_model_n_y(const struct DsvbModel *model);

/**
 * Number of state channels, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t dsvb_model_n_x(const struct DsvbModel *model);

/**
 * True when the model reports posterior standard deviations.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
bool dsvb_model_has_std(const struct DsvbModel *model);

/**
 * Estimate states from raw measurements `[rows, n_y]` (row-major).
 *
 * `mean_out` receives `rows * n_x` values in state units. `std_out` may be
 * null; otherwise it receives the posterior std (DSVB models only).
 *
 * # Safety
 * Buffers must hold at least the stated number of values.
 */
enum DsvbStatus dsvb_model_infer(const struct DsvbModel *model,
                                 const double *measurements,
                                 size_t rows,
                                 size_t n_y,
                                 size_t chunk_len,
                                 double *mean_out,
                                 size_t mean_len,
                                 double *std_out,
                                 size_t std_len);

/**
 * Run the soft-finger simulator.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DsvbStatus dsvb_synth_generate(enum DsvbContactMode mode,
                                    enum DsvbActuation actuation,
                                    uint64_t seed,
                                    size_t samples,
                                    struct DsvbDataset **out);

/**
 * Read a dataset CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DsvbStatus dsvb_dataset_load_csv(const char *path, struct DsvbDataset **out);

/**
 * Write a dataset CSV.
 *
 * # Safety
 * `ds` must be a live handle and `path` a NUL-terminated string.
 */
enum DsvbStatus dsvb_dataset_write_csv(const struct DsvbDataset *ds, const char *path);

/**
 * Release a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must come from this library and not be used afterwards.
 */
void dsvb_dataset_free(struct DsvbDataset *ds);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t dsvb_dataset_rows(const struct DsvbDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t dsvb_dataset_n_y(const struct DsvbDataset *ds);

/**
 * State channels, or 0 when the dataset is unlabelled.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t dsvb_dataset_n_x(const struct DsvbDataset *ds);

/**
 * Copy measurements `[rows, n_y]` into `out`.
 *
 * # Safety
 * `out` must hold at least `len` values.
 */
enum DsvbStatus dsvb_dataset_measurements(const struct DsvbDataset *ds, double *out, size_t len);

/**
 * Copy state labels `[rows, n_x]` into `out`.
 *
 * # Safety
 * `out` must hold at least `len` values.
 */
enum DsvbStatus dsvb_dataset_states(const struct DsvbDataset *ds, double *out, size_t len);

/**
 * KL divergence between diagonal Gaussians q and p of dimension `n`.
 *
 * # Safety
 * The four arrays must hold `n` values each and `out` must be valid.
 */
enum DsvbStatus dsvb_gaussian_kld(const double *mu_q,
                                  const double *sd_q,
                                  const double *mu_p,
                                  const double *sd_p,
                                  size_t n,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSVB_H */
