/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef INTERLACED_H
#define INTERLACED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `Ok` is zero.
 */
typedef enum InterlacedStatus {
  InterlacedStatus_Ok = 0,
  InterlacedStatus_NullPointer = 1,
  InterlacedStatus_InvalidArgument = 2,
  InterlacedStatus_DimensionMismatch = 3,
  InterlacedStatus_NotUnitary = 4,
  InterlacedStatus_NumericalFailure = 5,
  InterlacedStatus_BufferTooSmall = 6,
  InterlacedStatus_Panic = 7,
} InterlacedStatus;

/**
 * Ensemble used to draw the Hermitian perturbation of each mixer.
 */
typedef enum InterlacedEnsemble {
  /**
   * Independent Gaussian entries above the diagonal, mirrored.
   */
  InterlacedEnsemble_Entrywise = 0,
  /**
   * `(A + A^H) / 2` of a complex Gaussian matrix.
   */
  InterlacedEnsemble_Symmetrized = 1,
} InterlacedEnsemble;

/**
 * Opaque circuit: mixers plus a phase program.
 */
typedef struct InterlacedCircuit InterlacedCircuit;

/**
 * Opaque result of a fit or recalibration.
 */
typedef struct InterlacedFitResult InterlacedFitResult;

/**
 * Levenberg-Marquardt settings; start from [`interlaced_options_default`].
 */
typedef struct InterlacedOptions {
  double function_tolerance;
  double step_tolerance;
  double optimality_tolerance;
  size_t max_iterations;
  size_t restarts;
  double target_loss;
  double damping_initial;
  double damping_factor;
  double damping_max;
} InterlacedOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *interlaced_version(void);

/**
 * Message describing the last failure on this thread, or an empty string.
 * The pointer stays valid until the next library call on this thread.
 */
const char *interlaced_last_error(void);

struct InterlacedOptions interlaced_options_default(void);

/**
 * Defaults with `max_iterations = 50`, as used for recalibration.
 */
struct InterlacedOptions interlaced_options_truncated(void);

/**
 * Circuit with `layers` phase layers between `layers + 1` ideal mixers and
 * all phases zero.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum InterlacedStatus interlaced_circuit_new_ideal(size_t n,
                                                   size_t layers,
                                                   double kappa,
                                                   struct InterlacedCircuit **out);

/**
 * Circuit whose `layers + 1` mixers are independently perturbed with
 * coupling disorder `sigma_k`, drawn from `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum InterlacedStatus interlaced_circuit_new_perturbed(size_t n,
                                                       size_t layers,
                                                       double kappa,
                                                       double sigma_k,
                                                       enum InterlacedEnsemble ensemble,
                                                       uint64_t seed,
                                                       struct InterlacedCircuit **out);

/**
 * # Safety
 * `circuit` must be null or a handle from this library not yet freed.
 */
void interlaced_circuit_free(struct InterlacedCircuit *circuit);

/**
 * # Safety
 * `circuit` must be a live handle; `n` and `layers` may be null.
 */
enum InterlacedStatus interlaced_circuit_dims(const struct InterlacedCircuit *circuit,
                                              size_t *n,
                                              size_t *layers);

/**
 * Sets all `layers * n` phases. Entries at stuck shifters are ignored.
 *
 * # Safety
 * `circuit` must be a live handle and `theta` must point to `len` doubles.
 */
enum InterlacedStatus interlaced_circuit_set_phases(struct InterlacedCircuit *circuit,
                                                    const double *theta,
                                                    size_t len);

/**
 * Copies the `layers * n` phases into `theta`.
 *
 * # Safety
 * `circuit` must be a live handle and `theta` must point to `len` doubles.
 */
enum InterlacedStatus interlaced_circuit_get_phases(const struct InterlacedCircuit *circuit,
                                                    double *theta,
                                                    size_t len);

/**
 * Freezes `count` shifters: shifter `i` sits at zero-based `(layers[i],
 * ports[i])` and is stuck at `values[i]` radians.
 *
 * # Safety
 * `circuit` must be a live handle and the three arrays must hold `count`
 * entries each.
 */
enum InterlacedStatus interlaced_circuit_apply_faults(struct InterlacedCircuit *circuit,
                                                      const size_t *layers,
                                                      const size_t *ports,
                                                      const double *values,
                                                      size_t count);

/**
 * Number of free (not stuck) phases.
 *
 * # Safety
 * `circuit` must be a live handle and `out` writable.
 */
enum InterlacedStatus interlaced_circuit_free_count(const struct InterlacedCircuit *circuit,
                                                    size_t *out);

/**
 * Writes the composed unitary into `re` / `im` (each at least `n * n`).
 *
 * # Safety
 * `circuit` must be a live handle and both buffers must hold `len` doubles.
 */
enum InterlacedStatus interlaced_circuit_compose(const struct InterlacedCircuit *circuit,
                                                 double *re,
                                                 double *im,
                                                 size_t len);

/**
 * Haar-random `n x n` unitary drawn from `seed`.
 *
 * # Safety
 * Both buffers must hold `len` doubles.
 */
enum InterlacedStatus interlaced_haar_unitary(size_t n,
                                              uint64_t seed,
                                              double *re,
                                              double *im,
                                              size_t len);

/**
 * `||U - T||_F^2 / n^2`.
 *
 * # Safety
 * The four input arrays must hold `n * n` doubles and `out` be writable.
 */
enum InterlacedStatus interlaced_loss(size_t n,
                                      const double *u_re,
                                      const double *u_im,
                                      const double *t_re,
                                      const double *t_im,
                                      double *out);

/**
 * Fits the free phases of `circuit` to the target with random restarts.
 * The circuit itself is not modified; see
 * [`interlaced_fit_result_apply`]. `options` may be null for defaults.
 *
 * # Safety
 * `circuit` must be a live handle, the target arrays must hold `n * n`
 * doubles and `out` must be writable.
 */
enum InterlacedStatus interlaced_fit(const struct InterlacedCircuit *circuit,
                                     const double *target_re,
                                     const double *target_im,
                                     size_t n,
                                     const struct InterlacedOptions *options,
                                     uint64_t seed,
                                     struct InterlacedFitResult **out);

/**
 * Second optimization: up to `attempts` fits from fresh random phases
 * against the (perturbed) mixers of `circuit`, whose current phases are
 * taken as the uncorrected ones. `options` may be null for the truncated
 * defaults.
 *
 * # Safety
 * As for [`interlaced_fit`].
 */
enum InterlacedStatus interlaced_recalibrate(const struct InterlacedCircuit *circuit,
                                             const double *target_re,
                                             const double *target_im,
                                             size_t n,
                                             const struct InterlacedOptions *options,
                                             size_t attempts,
                                             uint64_t seed,
                                             struct InterlacedFitResult **out);

/**
 * # Safety
 * `result` must be null or a handle from this library not yet freed.
 */
void interlaced_fit_result_free(struct InterlacedFitResult *result);

/**
 * Final loss, or NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double interlaced_fit_result_loss(const struct InterlacedFitResult *result);

/**
 * Whether the loss reached the target loss.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
bool interlaced_fit_result_converged(const struct InterlacedFitResult *result);

/**
 * Iterations summed over all restarts; zero for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t interlaced_fit_result_iterations(const struct InterlacedFitResult *result);

/**
 * Restarts (or attempts) actually run; zero for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t interlaced_fit_result_restarts_used(const struct InterlacedFitResult *result);

/**
 * Copies the fitted `layers * n` phases into `theta`.
 *
 * # Safety
 * `result` must be a live handle and `theta` must hold `len` doubles.
 */
enum InterlacedStatus interlaced_fit_result_phases(const struct InterlacedFitResult *result,
                                                   double *theta,
                                                   size_t len);

/**
 * Installs the fitted phases (and their mask) into `circuit`.
 *
 * # Safety
 * Both handles must be live.
 */
enum InterlacedStatus interlaced_fit_result_apply(const struct InterlacedFitResult *result,
                                                  struct InterlacedCircuit *circuit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTERLACED_H */
