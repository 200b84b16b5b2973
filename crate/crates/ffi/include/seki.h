#ifndef SEKI_H
#define SEKI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SekiStatus {
  SEKI_STATUS_OK = 0,
  SEKI_STATUS_NULL_POINTER = 1,
  SEKI_STATUS_DIMENSION = 2,
  SEKI_STATUS_INVALID = 3,
  SEKI_STATUS_UNSUPPORTED = 4,
  SEKI_STATUS_NUMERICAL = 5,
  SEKI_STATUS_IO = 6,
  SEKI_STATUS_PANIC = 7,
} SekiStatus;

// Rule fixing the phase-two step scale when the covariance is frozen.
typedef enum SekiScaleRule {
  SEKI_SCALE_RULE_COVARIANCE = 0,
  SEKI_SCALE_RULE_BURN_IN = 1,
} SekiScaleRule;

typedef struct SekiEnsemble SekiEnsemble;

typedef struct SekiModel SekiModel;

typedef struct SekiRegularizer SekiRegularizer;

typedef struct SekiTrace SekiTrace;

// One trace row. Quantities that were not recorded are NaN.
typedef struct SekiRecord {
  uint64_t k;
  double objective;
  double objective_gap;
  double rel_error;
  double lambda_min;
  double lambda_max;
  double spread;
  uint64_t forward_evals;
  double wall_time_s;
} SekiRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
const char *seki_last_error(void);

// Library version as a static NUL-terminated string.
const char *seki_version(void);

// Linear model `y = A x + η` with `η ~ N(0, σ² I)`. `a` is `rows × cols`, `y` has `rows` entries.
//
// # Safety
// `a` and `y` must point to buffers of the stated lengths; `out` must be writable.
enum SekiStatus seki_model_new(const double *a,
                               size_t rows,
                               size_t cols,
                               const double *y,
                               double sigma,
                               struct SekiModel **out);

// Stack the prior `x ~ N(0, C₀)` under `base`; `c0` is `d × d` with `d` the state dimension.
//
// # Safety
// `base` must be a live model handle and `c0` must hold `d²` values.
enum SekiStatus seki_model_augment(const struct SekiModel *base,
                                   const double *c0,
                                   struct SekiModel **out);

// # Safety
// `model` must be a live model handle.
size_t seki_model_dim(const struct SekiModel *model);

// # Safety
// `model` must be a live model handle and `x` must hold `dim` values.
enum SekiStatus seki_model_misfit(const struct SekiModel *model,
                                  const double *x,
                                  size_t len,
                                  double *out);

// # Safety
// `model` must be null or a handle not yet freed.
void seki_model_free(struct SekiModel *model);

// `α ‖x‖₁`.
//
// # Safety
// `out` must be writable.
enum SekiStatus seki_regularizer_l1(double alpha, struct SekiRegularizer **out);

// `½ w ‖x‖²`.
//
// # Safety
// `out` must be writable.
enum SekiStatus seki_regularizer_tikhonov(double weight, struct SekiRegularizer **out);

// Isotropic total variation on a `rows × cols` image stored row-major.
//
// # Safety
// `out` must be writable.
enum SekiStatus seki_regularizer_tv2d(double alpha,
                                      size_t rows,
                                      size_t cols,
                                      struct SekiRegularizer **out);

// # Safety
// `reg` must be a live handle and `x` must hold `len` values.
enum SekiStatus seki_regularizer_value(const struct SekiRegularizer *reg,
                                       const double *x,
                                       size_t len,
                                       double *out);

// `prox_{τR}(x)` written to `out` (length `len`).
//
// # Safety
// `reg` must be a live handle; `x` and `out` must hold `len` values.
enum SekiStatus seki_regularizer_prox(const struct SekiRegularizer *reg,
                                      const double *x,
                                      size_t len,
                                      double tau,
                                      double *out);

// # Safety
// `reg` must be null or a handle not yet freed.
void seki_regularizer_free(struct SekiRegularizer *reg);

// `size` particles drawn i.i.d. from `N(mean, std² I)` with a seeded generator.
//
// # Safety
// `mean` must hold `dim` values; `out` must be writable.
enum SekiStatus seki_ensemble_gaussian(const double *mean,
                                       size_t dim,
                                       double std,
                                       size_t size,
                                       uint64_t seed,
                                       struct SekiEnsemble **out);

// Ensemble from a `dim × size` row-major matrix whose columns are the particles.
//
// # Safety
// `particles` must hold `dim · size` values; `out` must be writable.
enum SekiStatus seki_ensemble_from_matrix(const double *particles,
                                          size_t dim,
                                          size_t size,
                                          struct SekiEnsemble **out);

// # Safety
// `ens` must be a live handle and `out` must hold `dim` values.
enum SekiStatus seki_ensemble_mean(const struct SekiEnsemble *ens, double *out, size_t len);

// # Safety
// `ens` must be null or a handle not yet freed.
void seki_ensemble_free(struct SekiEnsemble *ens);

// Hybrid SEKI: fixed step `h0` for `burn_in` iterations, then the frozen-covariance
// mean iteration with steps `∝ (k+1)^{-p}`.
//
// # Safety
// `ens`, `model`, `reg` must be live handles; `out` must be writable.
enum SekiStatus seki_run_hybrid(const struct SekiEnsemble *ens,
                                const struct SekiModel *model,
                                const struct SekiRegularizer *reg,
                                double h0,
                                double p,
                                size_t burn_in,
                                size_t iterations,
                                enum SekiScaleRule scale_rule,
                                size_t trace_stride,
                                struct SekiTrace **out);

// Subgradient descent with steps `h0 / (k+1)^p` from `x0`.
//
// # Safety
// `model`, `reg` must be live handles; `x0` must hold `len` values; `out` must be writable.
enum SekiStatus seki_run_subgd(const double *x0,
                               size_t len,
                               const struct SekiModel *model,
                               const struct SekiRegularizer *reg,
                               double h0,
                               double p,
                               size_t iterations,
                               size_t trace_stride,
                               struct SekiTrace **out);

// # Safety
// `trace` must be a live handle.
size_t seki_trace_len(const struct SekiTrace *trace);

// # Safety
// `trace` must be a live handle; `out` must be writable.
enum SekiStatus seki_trace_record(const struct SekiTrace *trace,
                                  size_t index,
                                  struct SekiRecord *out);

// Final iterate (the ensemble mean for SEKI) copied into `out`.
//
// # Safety
// `trace` must be a live handle; `out` must hold `len` values.
enum SekiStatus seki_trace_final_iterate(const struct SekiTrace *trace, double *out, size_t len);

// Write the trace as CSV to the NUL-terminated UTF-8 path.
//
// # Safety
// `trace` must be a live handle and `path` a valid C string.
enum SekiStatus seki_trace_write_csv(const struct SekiTrace *trace, const char *path);

// # Safety
// `trace` must be null or a handle not yet freed.
void seki_trace_free(struct SekiTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEKI_H */
