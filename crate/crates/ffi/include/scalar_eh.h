#ifndef SCALAR_EH_H
#define SCALAR_EH_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SehStatus {
  SEH_STATUS_OK = 0,
  SEH_STATUS_DOMAIN = 1,
  SEH_STATUS_OVERFLOW = 2,
  SEH_STATUS_NON_CONVERGENCE = 3,
  SEH_STATUS_TRUNCATION = 4,
  SEH_STATUS_SINGULAR_PAIR = 5,
  SEH_STATUS_PARITY = 6,
  SEH_STATUS_PURITY = 7,
  SEH_STATUS_NEAR_PURE = 8,
  SEH_STATUS_QUADRATURE = 9,
  SEH_STATUS_INVALID = 10,
  SEH_STATUS_IO = 11,
  SEH_STATUS_NULL_POINTER = 12,
  SEH_STATUS_OUT_OF_RANGE = 13,
  SEH_STATUS_PANIC = 14,
} SehStatus;

typedef enum SehKernel {
  SEH_KERNEL_KC = 0,
  SEH_KERNEL_KS = 1,
  SEH_KERNEL_Q0 = 2,
  SEH_KERNEL_Q0INV = 3,
  SEH_KERNEL_P0 = 4,
  SEH_KERNEL_P0INV = 5,
} SehKernel;

typedef enum SehFamily {
  SEH_FAMILY_CE_EVEN = 0,
  SEH_FAMILY_CE_ODD = 1,
  SEH_FAMILY_SE_ODD = 2,
  SEH_FAMILY_SE_EVEN = 3,
} SehFamily;

typedef enum SehProfile {
  SEH_PROFILE_PARABOLIC = 0,
  SEH_PROFILE_TRIANGULAR = 1,
} SehProfile;

/**
 * Gaussian covariance pair of a chain or an interval of it.
 */
typedef struct SehChain SehChain;

/**
 * Kernel samples on a Chebyshev grid.
 */
typedef struct SehKernelGrid SehKernelGrid;

/**
 * Lattice entanglement-Hamiltonian matrices with their modes.
 */
typedef struct SehLatticeEh SehLatticeEh;

/**
 * Characteristic values and functions of one Mathieu family.
 */
typedef struct SehMathieu SehMathieu;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failure.
 */
const char *seh_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *seh_version(void);

/**
 * # Safety
 * `out` must be valid for a write.
 */
enum SehStatus seh_bessel_i(size_t n, double x, double *out);

/**
 * # Safety
 * `out` must be valid for a write.
 */
enum SehStatus seh_bessel_k(size_t n, double x, double *out);

/**
 * `K_c`/`K_s` series kernels (closed forms at `mass = 0`) or the massless `Q0`, `P0` and inverses,
 * on the `n`-point Chebyshev grid in angular coordinates. `truncation = 0` picks the default.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SehStatus seh_kernel_new(enum SehKernel kind,
                              double mass,
                              size_t n,
                              size_t truncation,
                              struct SehKernelGrid **out);

/**
 * # Safety
 * `h` must come from [`seh_kernel_new`]; `out` valid for a write.
 */
enum SehStatus seh_kernel_size(const struct SehKernelGrid *h, size_t *out);

/**
 * Grid node `v_i`.
 *
 * # Safety
 * `h` must come from [`seh_kernel_new`]; `out` valid for a write.
 */
enum SehStatus seh_kernel_node(const struct SehKernelGrid *h, size_t i, double *out);

/**
 * Sample `(i, j)`; singular diagonals read as NaN.
 *
 * # Safety
 * `h` must come from [`seh_kernel_new`]; `out` valid for a write.
 */
enum SehStatus seh_kernel_value(const struct SehKernelGrid *h, size_t i, size_t j, double *out);

/**
 * Row-major copy of all `n * n` samples.
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
enum SehStatus seh_kernel_values(const struct SehKernelGrid *h, double *buf, size_t len);

/**
 * # Safety
 * `h` must come from [`seh_kernel_new`] or be null; it is invalid afterwards.
 */
void seh_kernel_free(struct SehKernelGrid *h);

/**
 * Orders `n = 0..=n_max` of one family at parameter `q` (the `-q` angular equation).
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SehStatus seh_mathieu_solve(enum SehFamily family,
                                 double q,
                                 size_t n_max,
                                 size_t truncation,
                                 struct SehMathieu **out);

/**
 * # Safety
 * `h` must come from [`seh_mathieu_solve`]; `out` valid for a write.
 */
enum SehStatus seh_mathieu_char_value(const struct SehMathieu *h, size_t n, double *out);

/**
 * `ce/se_m(v, -q)`.
 *
 * # Safety
 * `h` must come from [`seh_mathieu_solve`]; `out` valid for a write.
 */
enum SehStatus seh_mathieu_eval(const struct SehMathieu *h, size_t n, double v, double *out);

/**
 * Log-derivative of the decaying radial function at the cut, `u = 0`.
 *
 * # Safety
 * `h` must come from [`seh_mathieu_solve`]; `out` valid for a write.
 */
enum SehStatus seh_mathieu_log_derivative(const struct SehMathieu *h, size_t n, double *out);

/**
 * # Safety
 * `h` must come from [`seh_mathieu_solve`] or be null; it is invalid afterwards.
 */
void seh_mathieu_free(struct SehMathieu *h);

/**
 * Commutator element `(m1, m2)` of the entanglement Hamiltonian with the modulated Hamiltonian.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SehStatus seh_commutator_element(size_t m1,
                                      size_t m2,
                                      enum SehProfile profile,
                                      double mass,
                                      double *out);

/**
 * First-order mass correction `2 pi delta H_Epi(x, y)` on `[-1, 1]^2`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SehStatus seh_delta_eh_pi(double x, double y, double mass, double *out);

/**
 * Ground state of a periodic chain; `m_phys = 0` selects the regulated massless chain.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SehStatus seh_chain_new(size_t n_total, double spacing, double m_phys, struct SehChain **out);

/**
 * Restriction to `len` consecutive sites starting at `start`.
 *
 * # Safety
 * `h` must come from this library; `out` valid for a write.
 */
enum SehStatus seh_chain_reduce(const struct SehChain *h,
                                size_t start,
                                size_t len,
                                struct SehChain **out);

/**
 * # Safety
 * `h` must come from this library; `out` valid for a write.
 */
enum SehStatus seh_chain_size(const struct SehChain *h, size_t *out);

/**
 * Row-major `Q` (`which = 0`) or `P` (`which = 1`).
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
enum SehStatus seh_chain_covariance(const struct SehChain *h,
                                    uint32_t which,
                                    double *buf,
                                    size_t len);

/**
 * # Safety
 * `h` must come from this library or be null; it is invalid afterwards.
 */
void seh_chain_free(struct SehChain *h);

/**
 * Entanglement-Hamiltonian matrices of a (mixed) reduction. `precision = 0` picks the default.
 *
 * # Safety
 * `h` must come from this library; `out` valid for a write.
 */
enum SehStatus seh_lattice_eh_new(const struct SehChain *h,
                                  uint32_t precision,
                                  struct SehLatticeEh **out);

/**
 * # Safety
 * `h` must come from [`seh_lattice_eh_new`]; `out` valid for a write.
 */
enum SehStatus seh_lattice_eh_size(const struct SehLatticeEh *h, size_t *out);

/**
 * Row-major `Hpi` (`which = 0`) or `Hphi` (`which = 1`).
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
enum SehStatus seh_lattice_eh_matrix(const struct SehLatticeEh *h,
                                     uint32_t which,
                                     double *buf,
                                     size_t len);

/**
 * Entanglement energies `epsilon_j`, one per site.
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
enum SehStatus seh_lattice_eh_epsilons(const struct SehLatticeEh *h, double *buf, size_t len);

/**
 * # Safety
 * `h` must come from [`seh_lattice_eh_new`]; `out` valid for a write.
 */
enum SehStatus seh_lattice_eh_entropy(const struct SehLatticeEh *h, double *out);

/**
 * # Safety
 * `h` must come from [`seh_lattice_eh_new`] or be null; it is invalid afterwards.
 */
void seh_lattice_eh_free(struct SehLatticeEh *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCALAR_EH_H */
