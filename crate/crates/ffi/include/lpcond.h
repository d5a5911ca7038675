#ifndef LPCOND_H
#define LPCOND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every fallible function.
 */
typedef enum LpcondStatus {
  LPCOND_STATUS_OK = 0,
  LPCOND_STATUS_NULL_POINTER = 1,
  LPCOND_STATUS_INVALID_UTF8 = 2,
  LPCOND_STATUS_INVALID_INPUT = 3,
  LPCOND_STATUS_CAPACITY = 4,
  LPCOND_STATUS_PARAMETER = 5,
  LPCOND_STATUS_TOO_LARGE = 6,
  LPCOND_STATUS_EMPTY_CONDITION = 7,
  LPCOND_STATUS_DEGENERATE = 8,
  LPCOND_STATUS_QUADRATURE = 9,
  LPCOND_STATUS_HYPOTHESIS = 10,
  LPCOND_STATUS_IO = 11,
  LPCOND_STATUS_OUT_OF_RANGE = 12,
  LPCOND_STATUS_PANIC = 13,
} LpcondStatus;

/**
 * A summand model together with its conditioning event `S_N = m`.
 */
typedef struct LpcondModel LpcondModel;

/**
 * A probability mass function on the integers.
 */
typedef struct LpcondPmf LpcondPmf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf`, NUL-terminated
 * and truncated to `len - 1` bytes. Returns the full message length in bytes
 * (excluding the terminator), or 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t lpcond_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lpcond_version(void);

/**
 * Total displacement of inserting `addresses[0..n]` (home urns in `1..=m`)
 * into an empty table of `m` urns with linear probing.
 *
 * # Safety
 * `addresses` must point to `n` readable values and `out` must be writable.
 */
enum LpcondStatus lpcond_total_displacement(size_t m,
                                            const size_t *addresses,
                                            size_t n,
                                            uint64_t *out);

/**
 * Builds a model from a JSON config such as
 * `{"kind":"hashing","params":{"n":6},"m":9}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` must be writable.
 */
enum LpcondStatus lpcond_model_from_json(const char *json, struct LpcondModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`lpcond_model_from_json`] and not be used again.
 */
void lpcond_model_free(struct LpcondModel *model);

/**
 * Number of summands `N` and target `m` of the conditioning event.
 *
 * # Safety
 * `model` must be a live handle; `n_summands` and `m` must be writable.
 */
enum LpcondStatus lpcond_model_condition(const struct LpcondModel *model,
                                         uint64_t *n_summands,
                                         int64_t *m);

/**
 * Exact law of `T_N` given `S_N = m`; `p_condition` receives `P(S_N = m)`
 * and may be null.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum LpcondStatus lpcond_exact_conditional(const struct LpcondModel *model,
                                           struct LpcondPmf **out,
                                           double *p_condition);

/**
 * Exact law of the total displacement of `n` balls hashed into `m` urns.
 *
 * # Safety
 * `out` must be writable.
 */
enum LpcondStatus lpcond_exact_displacement(uint64_t m, uint64_t n, struct LpcondPmf **out);

/**
 * Exact `P(S_N = m)` and its ratio to the Gaussian local approximation.
 *
 * # Safety
 * `model` must be a live handle; `p_exact` and `ratio` must be writable.
 */
enum LpcondStatus lpcond_local_limit(const struct LpcondModel *model,
                                     double *p_exact,
                                     double *ratio);

/**
 * Rejection-samples up to `capacity` values of `T_N` given `S_N = m` into
 * `values`, spending at most `budget` attempts (0 selects the default).
 * `written` receives the number of accepted values; `attempts` may be null.
 *
 * # Safety
 * `model` must be a live handle, `values` must hold `capacity` slots and
 * `written` must be writable.
 */
enum LpcondStatus lpcond_sample_conditional(const struct LpcondModel *model,
                                            uint64_t seed,
                                            size_t capacity,
                                            uint64_t budget,
                                            int64_t *values,
                                            size_t *written,
                                            uint64_t *attempts);

/**
 * Number of atoms stored in `pmf`; 0 for null.
 *
 * # Safety
 * `pmf` must be null or a live handle.
 */
size_t lpcond_pmf_len(const struct LpcondPmf *pmf);

/**
 * The `index`-th atom in increasing order of value.
 *
 * # Safety
 * `pmf` must be a live handle; `value` and `prob` must be writable.
 */
enum LpcondStatus lpcond_pmf_atom(const struct LpcondPmf *pmf,
                                  size_t index,
                                  int64_t *value,
                                  double *prob);

/**
 * `P(value)`, zero off the support.
 *
 * # Safety
 * `pmf` must be null or a live handle.
 */
double lpcond_pmf_prob(const struct LpcondPmf *pmf, int64_t value);

/**
 * Mean of the stored law; NaN for null.
 *
 * # Safety
 * `pmf` must be null or a live handle.
 */
double lpcond_pmf_mean(const struct LpcondPmf *pmf);

/**
 * Variance of the stored law; NaN for null.
 *
 * # Safety
 * `pmf` must be null or a live handle.
 */
double lpcond_pmf_variance(const struct LpcondPmf *pmf);

/**
 * Releases a law. Null is ignored.
 *
 * # Safety
 * `pmf` must come from this library and not be used again.
 */
void lpcond_pmf_free(struct LpcondPmf *pmf);

/**
 * Runs a command line (for example `{"lpcond", "enumerate", "--m", "8",
 * "--n", "6"}`) and returns its JSON or CSV output in `out`, to be released
 * with [`lpcond_string_free`].
 *
 * # Safety
 * `argv` must point to `argc` NUL-terminated strings and `out` must be
 * writable.
 */
enum LpcondStatus lpcond_run(size_t argc, const char *const *argv, char **out);

/**
 * Releases a string returned by [`lpcond_run`]. Null is ignored.
 *
 * # Safety
 * `s` must come from [`lpcond_run`] and not be used again.
 */
void lpcond_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPCOND_H */
