#ifndef MGVOL_H
#define MGVOL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define MGVOL_OK 0

// A required pointer argument was null.
#define MGVOL_ERR_NULL 1

#define MGVOL_ERR_INPUT 2

#define MGVOL_ERR_NUMERICAL 3

// An internal panic was caught at the boundary.
#define MGVOL_ERR_PANIC 4

// Opaque transfer function φ.
typedef struct MgvolAnamorphosis MgvolAnamorphosis;

// Opaque kriged grid.
typedef struct MgvolField MgvolField;

// Opaque covariance model.
typedef struct MgvolModel MgvolModel;

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t mgvol_last_error(char *buf, size_t len);

// # Safety
// `out` must be a valid pointer to a handle slot.
int32_t mgvol_anamorphosis_lognormal(double mu, double sigma, struct MgvolAnamorphosis **out);

// # Safety
// `out` must be a valid pointer to a handle slot.
int32_t mgvol_anamorphosis_exponential(double lambda, struct MgvolAnamorphosis **out);

// Empirical φ from `n` values with equal weights and default tails.
//
// # Safety
// `values` must point to `n` doubles; `out` to a handle slot.
int32_t mgvol_anamorphosis_empirical(const double *values,
                                     size_t n,
                                     struct MgvolAnamorphosis **out);

// # Safety
// `a` must be null or a handle from a constructor, not yet freed.
void mgvol_anamorphosis_free(struct MgvolAnamorphosis *a);

// z = φ(y).
//
// # Safety
// Pointers must be valid.
int32_t mgvol_backward(const struct MgvolAnamorphosis *a, double y, double *z);

// y = φ⁻¹(z).
//
// # Safety
// Pointers must be valid.
int32_t mgvol_forward(const struct MgvolAnamorphosis *a, double z, double *y);

// Parses a model such as "0.1 nugget + 0.9 sph(100)".
//
// # Safety
// `text` must be a NUL-terminated string; `out` a handle slot.
int32_t mgvol_model_parse(const char *text, struct MgvolModel **out);

// # Safety
// `m` must be null or a live handle.
void mgvol_model_free(struct MgvolModel *m);

// Covariance between two points.
//
// # Safety
// `a` and `b` must point to three doubles each.
int32_t mgvol_model_cov(const struct MgvolModel *m, const double *a, const double *b, double *out);

// Simple kriging of a regular grid from `n` samples. `xyz` holds 3·n
// coordinates (x, y, z per sample); `values` are raw values, transformed
// with `a`. Grid `origin`, `spacing` and `dims` hold three entries each.
//
// # Safety
// Array arguments must have the stated lengths; `out` a handle slot.
int32_t mgvol_field_krige(const struct MgvolModel *model,
                          const struct MgvolAnamorphosis *a,
                          const double *xyz,
                          const double *values,
                          size_t n,
                          const double *origin,
                          const double *spacing,
                          const size_t *dims,
                          struct MgvolField **out);

// # Safety
// `f` must be null or a live handle.
void mgvol_field_free(struct MgvolField *f);

// Number of grid nodes, or 0 for a null handle.
//
// # Safety
// `f` must be null or a live handle.
size_t mgvol_field_len(const struct MgvolField *f);

// Copies y*_SK and σ²_SK into arrays of `mgvol_field_len` entries. Either
// output may be null.
//
// # Safety
// Non-null outputs must hold `len` doubles.
int32_t mgvol_field_kriging(const struct MgvolField *f, double *y_star, double *sigma2, size_t len);

// Conditional mean and variance of the raw value at node `i`.
//
// # Safety
// Handles must be live; outputs valid.
int32_t mgvol_node_moments(const struct MgvolField *f,
                           const struct MgvolAnamorphosis *a,
                           size_t i,
                           double *mean,
                           double *variance);

// Conditional variance of the average over `n` nodes.
//
// # Safety
// `nodes` must point to `n` indices; handles live.
int32_t mgvol_volume_variance(const struct MgvolField *f,
                              const struct MgvolAnamorphosis *a,
                              const size_t *nodes,
                              size_t n,
                              double *out);

// Exact density and distribution function of the average over `n ≤ 4`
// nodes at `z`. Either output may be null.
//
// # Safety
// `nodes` must point to `n` indices; handles live.
int32_t mgvol_block_exact(const struct MgvolField *f,
                          const struct MgvolAnamorphosis *a,
                          const size_t *nodes,
                          size_t n,
                          double z,
                          double *pdf,
                          double *cdf);

// Monte-Carlo density of the average at `z` with its standard error.
//
// # Safety
// `nodes` must point to `n` indices; handles live.
int32_t mgvol_block_pdf_mc(const struct MgvolField *f,
                           const struct MgvolAnamorphosis *a,
                           const size_t *nodes,
                           size_t n,
                           double z,
                           size_t draws,
                           uint64_t seed,
                           double *density,
                           double *se);

#endif  /* MGVOL_H */
