/* oudrift: inertial-particle drift in the joint small-mass /
 * short-correlation-time limit of OU-driven second-order systems.
 *
 * C interface of the shared library. All handles are opaque; every
 * fallible call returns a status code and leaves a diagnostic in
 * ou_last_error() (thread-local). Matrices cross the boundary as dense
 * row-major double buffers sized by the model/noise dimensions.
 */
#ifndef OUDRIFT_H
#define OUDRIFT_H

#include <stdint.h>

#if defined(_WIN32)
#define OUDRIFT_API __declspec(dllexport)
#else
#define OUDRIFT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct ou_model ou_model;
typedef struct ou_noise ou_noise;

typedef enum ou_status {
    OU_OK = 0,
    OU_ERROR_INVALID_ARGUMENT = 1,
    OU_ERROR_NUMERIC = 2
} ou_status;

OUDRIFT_API const char* ou_version(void);

/* Message for the most recent failure on this thread; empty after success. */
OUDRIFT_API const char* ou_last_error(void);

/* ---- problem definitions ------------------------------------------------ */

/* Builtin catalog: constant (alias: scalar), scalar-affine, scalar-sine,
 * scalar-sine-xi, vortex, cellular, pipe. params_json may be NULL or "{}". */
OUDRIFT_API ou_model* ou_model_create(const char* name, const char* params_json);
OUDRIFT_API void ou_model_destroy(ou_model* m);
OUDRIFT_API int ou_model_dim(const ou_model* m);
OUDRIFT_API int ou_model_noise_dim(const ou_model* m);

/* OU driver dz = -A z dt + B dw; A is n x n (eigenvalues with positive real
 * part), B is n x m, both row-major. */
OUDRIFT_API ou_noise* ou_noise_create(int n, int m, const double* A, const double* B);
OUDRIFT_API ou_noise* ou_noise_identity(int n);
OUDRIFT_API void ou_noise_destroy(ou_noise* s);
OUDRIFT_API int ou_noise_n(const ou_noise* s);
OUDRIFT_API int ou_noise_m(const ou_noise* s);

/* Stationary covariance M (n x n) solving A M + M A^T = B B^T. */
OUDRIFT_API ou_status ou_noise_stationary_covariance(const ou_noise* s, double* M_out);

/* ---- drift ingredients --------------------------------------------------- */

/* alpha accepts 0, any finite positive value, or INFINITY.
 * Buffer sizes: M n*n, L d*n, N d*d, alphaN d*d. Any output may be NULL. */
OUDRIFT_API ou_status ou_drift_matrices(const ou_model* m, const ou_noise* s,
                                        double alpha, const double* x, double* M_out,
                                        double* L_out, double* N_out, double* alphaN_out);

/* Inertial-Ito drift f_alpha(x), d entries. */
OUDRIFT_API ou_status ou_inertial_drift(const ou_model* m, const ou_noise* s,
                                        double alpha, const double* x, double* f_out);

/* Closed-form drift for scalar-friction models (A = identity). */
OUDRIFT_API ou_status ou_scalar_drift(const ou_model* m, double alpha, const double* x,
                                      double* f_out);

/* Signed turbulence drift -b_alpha with its centrifugal/turbophoretic split;
 * only for turbulence models. Outputs may be NULL. */
OUDRIFT_API ou_status ou_turbulence_drift(const ou_model* m, double alpha,
                                          const double* x, double* total_out,
                                          double* centrifugal_out,
                                          double* turbophoretic_out);

/* ---- simulation ----------------------------------------------------------- */

/* One coupled pre-limit/limit trajectory on a shared grid and Gaussian
 * stream. x0 and v0 have d entries (v0 may be NULL for zero). Outputs:
 * sup over grid times of |x_eps - x^alpha|, both terminal states (d each),
 * flagged != 0 if the trajectory blew up. */
OUDRIFT_API ou_status ou_run_coupled(const ou_model* m, const ou_noise* s, double T,
                                     double dt, double eps, double mu, double alpha,
                                     const double* x0, const double* v0, uint64_t seed,
                                     uint64_t trajectory_index, double* sup_distance,
                                     double* terminal_pre, double* terminal_limit,
                                     int* flagged);

/* ---- experiment runner ---------------------------------------------------- */

/* Runs the experiment described by a JSON configuration (same schema the
 * CLI uses) and writes report.json, data.csv and config.echo.json under the
 * configured output directory.
 * Returns 0 on verdict pass (or no verdict), 2 on verdict fail, 1 on error.
 * When summary_out is non-NULL it receives a pointer to a thread-local
 * human-readable summary, valid until the next call on this thread. */
OUDRIFT_API int ou_dispatch(const char* config_json, const char** summary_out);

#ifdef __cplusplus
}
#endif

#endif /* OUDRIFT_H */
