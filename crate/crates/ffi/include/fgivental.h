#ifndef FGIVENTAL_H
#define FGIVENTAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the nonzero values below 5 match the CLI exit codes.
typedef enum FgvStatus {
  FGV_STATUS_OK = 0,
  FGV_STATUS_INTERNAL = 1,
  FGV_STATUS_UNSTABLE = 2,
  FGV_STATUS_MALFORMED = 3,
  FGV_STATUS_FLAT_F = 4,
  FGV_STATUS_NULL_POINTER = 5,
  FGV_STATUS_INVALID_UTF8 = 6,
  FGV_STATUS_PANIC = 7,
} FgvStatus;

// An element (R, T) of the F-Givental group.
typedef struct FgvElement FgvElement;

// A flat F-manifold 1-jet with its potential.
typedef struct FgvJet FgvJet;

// An F-TFT: algebra, structure constants and α.
typedef struct FgvSpec FgvSpec;

// Message of the last failed call on this thread, or NULL. Valid until the
// next call on the same thread.
const char *fgv_last_error(void);

// # Safety
// `s` must come from this library or be NULL.
void fgv_string_free(char *s);

// Number of stable trees of type (g, 1+n).
//
// # Safety
// `out` must be a valid pointer.
enum FgvStatus fgv_tree_count(uint32_t g, uint32_t n, size_t *out);

// Parse an F-TFT spec from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum FgvStatus fgv_spec_from_toml(const char *toml, struct FgvSpec **out);

// # Safety
// `spec` must come from this library or be NULL.
void fgv_spec_free(struct FgvSpec *spec);

// Parse a group element from TOML with keys `dim`, `r`, `t`.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum FgvStatus fgv_element_from_toml(const char *toml, struct FgvElement **out);

// The identity element of dimension `dim`, known to order `order`.
//
// # Safety
// `out` must be a valid pointer.
enum FgvStatus fgv_element_identity(size_t dim, size_t order, struct FgvElement **out);

// The product a∘b (b acts first).
//
// # Safety
// `a`, `b` must be live handles and `out` a valid pointer.
enum FgvStatus fgv_element_compose(const struct FgvElement *a,
                                   const struct FgvElement *b,
                                   struct FgvElement **out);

// 1 when the element is (Id, 0), else 0.
//
// # Safety
// `e` must be a live handle and `out` a valid pointer.
enum FgvStatus fgv_element_is_identity(const struct FgvElement *e, int32_t *out);

// # Safety
// `e` must come from this library or be NULL.
void fgv_element_free(struct FgvElement *e);

// Act on the F-TFT at type (g, 1+n) and return the classes as JSON lines.
//
// # Safety
// `e`, `spec` must be live handles and `out` a valid pointer.
enum FgvStatus fgv_act(const struct FgvElement *e,
                       const struct FgvSpec *spec,
                       uint32_t g,
                       uint32_t n,
                       char **out);

// ∫ over M̄_{0,n} of Π ψ_i^{psi[i]} Π κ_{kappa[j]}, as "p/q", with n = `n_psi`.
//
// # Safety
// `psi` and `kappa` must point to arrays of the given lengths.
enum FgvStatus fgv_genus0_integral(const uint32_t *psi,
                                   size_t n_psi,
                                   const uint32_t *kappa,
                                   size_t n_kappa,
                                   char **out);

// s_1, …, s_M for the given r, one "p/q" per line.
//
// # Safety
// `out` must be a valid pointer.
enum FgvStatus fgv_rspin_s(uint32_t r, size_t m, char **out);

// Parse a flat F-manifold jet from TOML (keys `dim`, `basepoint`,
// `potential`, optional `alpha`, `unit`, `[euler]`).
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum FgvStatus fgv_jet_from_toml(const char *toml, struct FgvJet **out);

// The r-spin jet at t = 1.
//
// # Safety
// `out` must be a valid pointer.
enum FgvStatus fgv_jet_rspin(uint32_t r, struct FgvJet **out);

// # Safety
// `j` must come from this library or be NULL.
void fgv_jet_free(struct FgvJet *j);

// Reconstruct (R, T) to order `order` and the F-TFT at the base point.
// Fails with `FlatF` when WDVV or the unit equation fails, or the point is
// not semisimple or is resonant.
//
// # Safety
// `j` must be a live handle; `elem` and `spec` valid pointers.
enum FgvStatus fgv_reconstruct(const struct FgvJet *j,
                               size_t order,
                               struct FgvElement **elem,
                               struct FgvSpec **spec);

#endif  /* FGIVENTAL_H */
