#ifndef FCIX_H
#define FCIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Codes 2 to 4 match the CLI exit codes.
 */
typedef enum FcixStatus {
  FCIX_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or a buffer that is too small.
   */
  FCIX_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Invalid input data, parameters or config.
   */
  FCIX_STATUS_VALIDATION = 2,
  /**
   * A numerical routine or fit failed.
   */
  FCIX_STATUS_NUMERICAL = 3,
  /**
   * An upstream pipeline artifact is missing.
   */
  FCIX_STATUS_MISSING_DEPENDENCY = 4,
  FCIX_STATUS_PANIC = 5,
} FcixStatus;

/**
 * Opaque regime mixture.
 */
typedef struct FcixMixture FcixMixture;

/**
 * Opaque MLP distribution.
 */
typedef struct FcixMlp FcixMlp;

/**
 * Opaque daily chaos-index series.
 */
typedef struct FcixSeries FcixSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fcix_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fcix_version(void);

/**
 * Rice-rule bin count for `n` observations.
 */
size_t fcix_rice_bin_count(size_t n);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum FcixStatus fcix_mlp_new(double mu, double sigma, double omega, struct FcixMlp **out);

/**
 * # Safety
 * `h` must be null or a handle from [`fcix_mlp_new`] not yet freed.
 */
void fcix_mlp_free(struct FcixMlp *h);

/**
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum FcixStatus fcix_mlp_pdf(const struct FcixMlp *h, double psi, double *out);

/**
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum FcixStatus fcix_mlp_cdf(const struct FcixMlp *h, double psi, double *out);

/**
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum FcixStatus fcix_mlp_quantile(const struct FcixMlp *h, double q, double *out);

/**
 * Writes `n` seeded draws into `out`.
 *
 * # Safety
 * `h` must be a live handle and `out` must hold `n` doubles.
 */
enum FcixStatus fcix_mlp_sample(const struct FcixMlp *h, size_t n, uint64_t seed, double *out);

/**
 * Builds an `r`-component mixture from parallel parameter arrays.
 *
 * # Safety
 * The four arrays must each hold `r` doubles; `out` must be valid.
 */
enum FcixStatus fcix_mixture_new(size_t r,
                                 const double *mu,
                                 const double *sigma,
                                 const double *omega,
                                 const double *pi,
                                 struct FcixMixture **out);

/**
 * Loads a mixture from its JSON form (as written by the regimes stage).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid.
 */
enum FcixStatus fcix_mixture_from_json(const char *json, struct FcixMixture **out);

/**
 * # Safety
 * `h` must be null or a live mixture handle.
 */
void fcix_mixture_free(struct FcixMixture *h);

/**
 * Number of regimes, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live mixture handle.
 */
size_t fcix_mixture_n_regimes(const struct FcixMixture *h);

/**
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum FcixStatus fcix_mixture_density(const struct FcixMixture *h, double psi, double *out);

/**
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum FcixStatus fcix_mixture_cdf(const struct FcixMixture *h, double psi, double *out);

/**
 * Maximum-posterior regime of each value. Labels are 1-based in order of
 * increasing regime mean.
 *
 * # Safety
 * `values` must hold `n` doubles and `labels` room for `n` entries.
 */
enum FcixStatus fcix_mixture_classify(const struct FcixMixture *h,
                                      const double *values,
                                      size_t n,
                                      size_t *labels);

/**
 * Loads a price panel CSV and computes the daily index.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum FcixStatus fcix_series_from_prices(const char *path, struct FcixSeries **out);

/**
 * # Safety
 * `h` must be null or a live series handle.
 */
void fcix_series_free(struct FcixSeries *h);

/**
 * Length of the series, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live series handle.
 */
size_t fcix_series_len(const struct FcixSeries *h);

/**
 * Copies the values into `out`, which must hold at least the series length.
 *
 * # Safety
 * `h` must be a live handle and `out` must hold `cap` doubles.
 */
enum FcixStatus fcix_series_copy_values(const struct FcixSeries *h, double *out, size_t cap);

/**
 * Exactly `k` change points with median-heuristic bandwidth. Writes the
 * exclusive segment ends into `breakpoints` and their count to `n_out`.
 *
 * # Safety
 * `values` must hold `n` doubles, `breakpoints` room for `cap` entries and
 * `n_out` must be valid.
 */
enum FcixStatus fcix_detect_changepoints(const double *values,
                                         size_t n,
                                         size_t k,
                                         size_t min_size,
                                         size_t *breakpoints,
                                         size_t cap,
                                         size_t *n_out);

/**
 * Stationary distribution of a row-stochastic `r x r` matrix stored row
 * major.
 *
 * # Safety
 * `probs` must hold `r * r` doubles and `out` room for `r`.
 */
enum FcixStatus fcix_stationary_distribution(const double *probs, size_t r, double *out);

/**
 * Runs the pipeline described by a TOML config file.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string.
 */
enum FcixStatus fcix_run(const char *config_path, bool force);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FCIX_H */
