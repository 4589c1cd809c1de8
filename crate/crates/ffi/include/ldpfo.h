#ifndef LDPFO_H
#define LDPFO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum LdpfoStatus {
  LDPFO_STATUS_OK = 0,
  LDPFO_STATUS_NULL_POINTER = 1,
  LDPFO_STATUS_INVALID_ARGUMENT = 2,
  LDPFO_STATUS_INVALID_BUDGET = 3,
  LDPFO_STATUS_DEGENERATE_CHAIN = 4,
  LDPFO_STATUS_INVALID_REPORT = 5,
  LDPFO_STATUS_ESTIMATION_FAILED = 6,
  LDPFO_STATUS_BUFFER_TOO_SMALL = 7,
  LDPFO_STATUS_JSON = 8,
  LDPFO_STATUS_PANIC = 9,
} LdpfoStatus;

typedef enum LdpfoEstimator {
  LDPFO_ESTIMATOR_MI = 0,
  LDPFO_ESTIMATOR_IBU = 1,
} LdpfoEstimator;

typedef struct LdpfoMechanism LdpfoMechanism;

typedef struct LdpfoReports LdpfoReports;

typedef struct LdpfoRng LdpfoRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *ldpfo_version(void);

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *ldpfo_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void ldpfo_string_free(char *s);

struct LdpfoRng *ldpfo_rng_new(uint64_t seed);

/**
 * # Safety
 * `rng` must come from [`ldpfo_rng_new`] and not be freed twice.
 */
void ldpfo_rng_free(struct LdpfoRng *rng);

/**
 * Build a one-shot mechanism (`GRR`, `SUE`, `OUE`, `SS`, `THE`, `BLH`,
 * `OLH`).
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LdpfoStatus ldpfo_mechanism_new(const char *id,
                                     uintptr_t k,
                                     double eps,
                                     struct LdpfoMechanism **out);

/**
 * Build a longitudinal mechanism (`L-GRR`, `L-SUE`, `L-OUE`, `L-SOUE`,
 * `L-OSUE`, `L-BLH`, `L-OLH`).
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LdpfoStatus ldpfo_mechanism_new_longitudinal(const char *id,
                                                  uintptr_t k,
                                                  double eps_inf,
                                                  double eps_1,
                                                  struct LdpfoMechanism **out);

/**
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void ldpfo_mechanism_free(struct LdpfoMechanism *m);

/**
 * Support probabilities used by the estimators.
 *
 * # Safety
 * All pointers must be valid.
 */
enum LdpfoStatus ldpfo_mechanism_params(const struct LdpfoMechanism *m,
                                        double *p_star,
                                        double *q_star);

struct LdpfoReports *ldpfo_reports_new(void);

/**
 * # Safety
 * `r` must come from this library and not be freed twice.
 */
void ldpfo_reports_free(struct LdpfoReports *r);

/**
 * Number of reports held; 0 for a null handle.
 *
 * # Safety
 * `r` must be null or a valid handle.
 */
uintptr_t ldpfo_reports_len(const struct LdpfoReports *r);

/**
 * Obfuscate `v` and append the report. Longitudinal mechanisms treat each
 * call as the first report of a new user.
 *
 * # Safety
 * All pointers must be valid handles.
 */
enum LdpfoStatus ldpfo_client(const struct LdpfoMechanism *m,
                              uintptr_t v,
                              struct LdpfoRng *rng,
                              struct LdpfoReports *reports);

/**
 * Obfuscate `n` values in order, appending one report each. On failure
 * nothing is appended.
 *
 * # Safety
 * `values` must point to `n` readable elements; other pointers must be
 * valid handles.
 */
enum LdpfoStatus ldpfo_client_batch(const struct LdpfoMechanism *m,
                                    const uintptr_t *values,
                                    uintptr_t n,
                                    struct LdpfoRng *rng,
                                    struct LdpfoReports *reports);

/**
 * Estimate the distribution from `reports` into `out[0..out_len]`, where
 * `out_len` must equal the mechanism's `k`. `iterations` and
 * `final_error` may be null; for MI they are set to 0 and NaN.
 *
 * # Safety
 * `out` must point to `out_len` writable doubles; other pointers must be
 * valid or, where noted, null.
 */
enum LdpfoStatus ldpfo_estimate(const struct LdpfoMechanism *m,
                                const struct LdpfoReports *reports,
                                enum LdpfoEstimator estimator,
                                uintptr_t max_iter,
                                double tol,
                                double *out,
                                uintptr_t out_len,
                                uintptr_t *iterations,
                                double *final_error);

/**
 * Serialize all reports as a JSON array of tagged objects. Release the
 * string with [`ldpfo_string_free`].
 *
 * # Safety
 * `reports` must be a valid handle and `out` a valid pointer.
 */
enum LdpfoStatus ldpfo_reports_to_json(const struct LdpfoReports *reports, char **out);

/**
 * Parse a JSON array produced by [`ldpfo_reports_to_json`] into a new
 * handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LdpfoStatus ldpfo_reports_from_json(const char *json, struct LdpfoReports **out);

/**
 * JSON encoding of the report at `index`.
 *
 * # Safety
 * `reports` must be a valid handle and `out` a valid pointer.
 */
enum LdpfoStatus ldpfo_report_json(const struct LdpfoReports *reports, uintptr_t index, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LDPFO_H */
