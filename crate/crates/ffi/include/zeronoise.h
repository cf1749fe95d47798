#ifndef ZERONOISE_H
#define ZERONOISE_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. `ZN_STATUS_OK` is zero.
 */
typedef enum ZnStatus {
  ZN_STATUS_OK = 0,
  /**
   * null pointer, bad buffer length, or an out-of-range parameter
   */
  ZN_STATUS_INVALID_ARGUMENT = 1,
  ZN_STATUS_MAP_ERROR = 2,
  ZN_STATUS_KERNEL_ERROR = 3,
  ZN_STATUS_SOLVER_ERROR = 4,
  /**
   * the requested resolution failed a self-consistency check
   */
  ZN_STATUS_RESOLUTION_ERROR = 5,
  ZN_STATUS_UNSUPPORTED = 6,
  ZN_STATUS_INTERNAL = 7,
} ZnStatus;

/**
 * Noise kernel handle.
 */
typedef struct ZnKernel ZnKernel;

/**
 * Expanding circle map handle.
 */
typedef struct ZnMap ZnMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next library call from the same thread. Never NULL.
 */
const char *zn_last_error(void);

/**
 * Library version as a static string, e.g. "0.1.0".
 */
const char *zn_version(void);

/**
 * Create a built-in map: "doubling", "perturbed-doubling" or "skew-tent".
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ZnStatus zn_map_new_builtin(const char *name, struct ZnMap **out);

/**
 * Create a smooth map from a lift expression in `x`, e.g.
 * "2*x + 0.1*sin(2*pi*x)". The lift must be expanding with integer degree.
 *
 * # Safety
 * `expr` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ZnStatus zn_map_new_smooth(const char *expr, struct ZnMap **out);

/**
 * # Safety
 * `map` must come from a `zn_map_new_*` call; passing it twice is UB.
 */
void zn_map_free(struct ZnMap *map);

/**
 * Create a built-in kernel: "uniform", "triangular", "epanechnikov" or "skew".
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ZnStatus zn_kernel_new_builtin(const char *name, struct ZnKernel **out);

/**
 * Second moment sigma^2 of the kernel, or NaN if `kernel` is NULL.
 *
 * # Safety
 * `kernel` must be NULL or a live handle.
 */
double zn_kernel_sigma2(const struct ZnKernel *kernel);

/**
 * # Safety
 * `kernel` must come from `zn_kernel_new_builtin`; passing it twice is UB.
 */
void zn_kernel_free(struct ZnKernel *kernel);

/**
 * Stationary density of the (noisy) transfer operator on `n_bins` equal
 * bins, written into `out` (length `n_bins`, mean 1). Pass `kernel = NULL`
 * for the deterministic operator; `delta` is ignored in that case.
 *
 * # Safety
 * `map` must be a live handle, `kernel` NULL or a live handle, and `out`
 * must point to `n_bins` writable doubles.
 */
enum ZnStatus zn_stationary_density(const struct ZnMap *map,
                                    const struct ZnKernel *kernel,
                                    double delta,
                                    size_t n_bins,
                                    double *out);

/**
 * Zero-noise sweep on `n_bins` Ulam bins. `deltas` (length `n_deltas`) must
 * be strictly decreasing in (0, 0.25]. For each delta the L1 distance to
 * the deterministic density goes to `out_dist_l1` and the grid Lipschitz
 * constant of the stationary density to `out_lip`; either may be NULL.
 *
 * # Safety
 * Handles must be live; non-NULL output buffers must hold `n_deltas` doubles.
 */
enum ZnStatus zn_sweep(const struct ZnMap *map,
                       const struct ZnKernel *kernel,
                       const double *deltas,
                       size_t n_deltas,
                       size_t n_bins,
                       double *out_dist_l1,
                       double *out_lip);

/**
 * Sharp L1 lower bound 1/(9a) for approximating the reference two-level
 * density by an a-Lipschitz function. Returns NaN unless a > 2/3.
 */
double zn_best_lipschitz_bound(double a);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ZERONOISE_H */
