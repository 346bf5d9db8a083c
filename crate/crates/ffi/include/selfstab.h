#ifndef SELFSTAB_H
#define SELFSTAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by every entry point.
 */
enum SsStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_PARSE = 3,
  SS_STATUS_VALIDATION = 4,
  SS_STATUS_NUMERICAL = 5,
  SS_STATUS_IO = 6,
  SS_STATUS_PANIC = 7,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum SsStatus SsStatus;
#else
typedef int32_t SsStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/*
 Opaque hypothesis bank with its dynamical model.
 */
typedef struct SsBank SsBank;

/*
 Opaque protocol configuration.
 */
typedef struct SsConfig SsConfig;

/*
 Opaque protocol result.
 */
typedef struct SsResult SsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread (empty if none). The
 pointer stays valid until the next failing call on the same thread.
 */
const char *ss_last_error_message(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void ss_string_free(char *s);

/*
 Quantum Fisher information of the state with Bloch vector `bloch[3]` for
 the generator axis `g[3]`.

 # Safety
 `bloch` and `g` must point to three doubles; `out_qfi` must be writable.
 */
SsStatus ss_qfi(const double *bloch, const double *g, double *out_qfi);

/*
 `1 / (nu * fq)`.

 # Safety
 `out_bound` must be writable.
 */
SsStatus ss_cramer_rao_bound(double fq, uint64_t nu, double *out_bound);

/*
 Parses a TOML configuration.

 # Safety
 `text` must be a NUL-terminated string; `out_config` must be writable.
 */
SsStatus ss_config_from_toml(const char *text, struct SsConfig **out_config);

/*
 The default configuration with the given true phase.

 # Safety
 `out_config` must be writable.
 */
SsStatus ss_config_default(double phi_true, struct SsConfig **out_config);

/*
 The configuration as TOML with every key explicit.

 # Safety
 `config` must be a live handle; `out_text` must be writable.
 */
SsStatus ss_config_to_toml(const struct SsConfig *config, char **out_text);

/*
 # Safety
 `config` must be null or a handle not yet freed.
 */
void ss_config_free(struct SsConfig *config);

/*
 Runs the protocol once with the given master seed.

 # Safety
 `config` must be a live handle; `out_result` must be writable.
 */
SsStatus ss_run(const struct SsConfig *config, uint64_t seed, struct SsResult **out_result);

/*
 Number of blocks run.

 # Safety
 `result` must be a live handle; `out_len` must be writable.
 */
SsStatus ss_result_num_blocks(const struct SsResult *result, size_t *out_len);

/*
 Final posterior mean and standard deviation, and whether the tolerance
 was reached (1) or the block budget ran out (0).

 # Safety
 `result` must be a live handle; the outputs must be writable.
 */
SsStatus ss_result_estimate(const struct SsResult *result,
                            double *out_phi_est,
                            double *out_std,
                            int32_t *out_converged);

/*
 Estimate and end-of-block purity of block `index`.

 # Safety
 `result` must be a live handle; the outputs must be writable.
 */
SsStatus ss_result_block(const struct SsResult *result,
                         size_t index,
                         double *out_phi_est,
                         double *out_std,
                         double *out_purity);

/*
 Per-block summary as JSON.

 # Safety
 `result` must be a live handle; `out_json` must be writable.
 */
SsStatus ss_result_to_json(const struct SsResult *result, char **out_json);

/*
 # Safety
 `result` must be null or a handle not yet freed.
 */
void ss_result_free(struct SsResult *result);

/*
 A hypothesis bank on `n_points` nodes over `[phi_min, phi_max]`, every
 node starting from the Bloch vector `bloch0[3]`, evolving under generator
 axis `g[3]` and thermal noise `(gamma, nbar)` with step `dt`.

 # Safety
 `bloch0` and `g` must point to three doubles; `out_bank` must be writable.
 */
SsStatus ss_bank_new(double phi_min,
                     double phi_max,
                     size_t n_points,
                     const double *bloch0,
                     const double *g,
                     double gamma,
                     double nbar,
                     double dt,
                     struct SsBank **out_bank);

/*
 Folds one record increment `dy`, measured along `axis[3]` with strength
 `kappa` and efficiency `eta`, into every hypothesis.

 # Safety
 `bank` must be a live handle; `axis` must point to three doubles.
 */
SsStatus ss_bank_assimilate(struct SsBank *bank,
                            double dy,
                            const double *axis,
                            double kappa,
                            double eta);

/*
 Posterior mean and variance.

 # Safety
 `bank` must be a live handle; the outputs must be writable.
 */
SsStatus ss_bank_estimate(const struct SsBank *bank, double *out_phi_est, double *out_variance);

/*
 # Safety
 `bank` must be null or a handle not yet freed.
 */
void ss_bank_free(struct SsBank *bank);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELFSTAB_H */
