#ifndef GCP_HYDRO_H
#define GCP_HYDRO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum GcpStatus {
  GCP_STATUS_OK = 0,
  GCP_STATUS_NULL_POINTER = 1,
  GCP_STATUS_INVALID_ARGUMENT = 2,
  GCP_STATUS_CONFIG_ERROR = 3,
  GCP_STATUS_NUMERICAL_ERROR = 4,
  GCP_STATUS_IO_ERROR = 5,
  GCP_STATUS_BUFFER_TOO_SMALL = 6,
  GCP_STATUS_PANIC = 7,
} GcpStatus;

// Continuous kernels available through the C interface.
typedef enum GcpKernelKind {
  // `J = p1`.
  GCP_KERNEL_KIND_CONSTANT = 0,
  // `J = prod_j (1 + p1 cos(2 pi (x_j - y_j)))`.
  GCP_KERNEL_KIND_COSINE = 1,
  // Periodic Gaussian bump of amplitude `p1` and width `p2`.
  GCP_KERNEL_KIND_GAUSSIAN = 2,
} GcpKernelKind;

// Model parameters on a fixed lattice.
typedef struct GcpModel GcpModel;

// A running particle system together with its random stream.
typedef struct GcpSimulator GcpSimulator;

// Solution of the lattice hydrodynamic equation on a uniform time grid.
typedef struct GcpTrajectory GcpTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none failed.
// The pointer stays valid until the next failing call on the same thread.
const char *gcp_last_error(void);

// Builds a model with `k + 1` states on the `d`-dimensional torus of side `n`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one pointer.
enum GcpStatus gcp_model_new(size_t d,
                             size_t n,
                             size_t k,
                             double a,
                             enum GcpKernelKind kernel,
                             double p1,
                             double p2,
                             struct GcpModel **out);

// # Safety
// `model` must be null or a pointer returned by [`gcp_model_new`] that has not been freed.
void gcp_model_free(struct GcpModel *model);

// Number of lattice sites, or 0 for a null model.
//
// # Safety
// `model` must be null or a live model.
size_t gcp_model_num_sites(const struct GcpModel *model);

// Integrates the hydrodynamic equation from `u0` up to `t_end` with step
// `h` (shrunk to land on `t_end`). `u0` holds `num_sites * (k + 1)` values,
// site-major.
//
// # Safety
// `model` must be live, `u0` must point to `len` readable doubles and `out`
// to storage for one pointer.
enum GcpStatus gcp_hydro_integrate(const struct GcpModel *model,
                                   const double *u0,
                                   size_t len,
                                   double t_end,
                                   double h,
                                   struct GcpTrajectory **out);

// # Safety
// `traj` must be null or a live trajectory.
void gcp_trajectory_free(struct GcpTrajectory *traj);

// Number of stored time points, or 0 for a null trajectory.
//
// # Safety
// `traj` must be null or a live trajectory.
size_t gcp_trajectory_len(const struct GcpTrajectory *traj);

// Copies the time and the state at grid index `idx`.
//
// # Safety
// `traj` must be live, `time` writable, and `buf` must point to `len`
// writable doubles.
enum GcpStatus gcp_trajectory_state(const struct GcpTrajectory *traj,
                                    size_t idx,
                                    double *time,
                                    double *buf,
                                    size_t len);

// Starts a simulation from the given spins. The random stream is the one
// a replica with index `replica` gets under master seed `seed`.
//
// # Safety
// `model` must be live, `states` must point to `len` readable bytes and
// `out` to storage for one pointer.
enum GcpStatus gcp_simulator_new(const struct GcpModel *model,
                                 const uint8_t *states,
                                 size_t len,
                                 uint64_t seed,
                                 uint64_t replica,
                                 struct GcpSimulator **out);

// # Safety
// `sim` must be null or a live simulator.
void gcp_simulator_free(struct GcpSimulator *sim);

// Runs the dynamics up to time `t`, which must not precede the current time.
//
// # Safety
// `sim` must be live.
enum GcpStatus gcp_simulator_advance(struct GcpSimulator *sim, double t);

// Current simulation time, or NaN for a null simulator.
//
// # Safety
// `sim` must be null or live.
double gcp_simulator_time(const struct GcpSimulator *sim);

// Number of events fired so far, or 0 for a null simulator.
//
// # Safety
// `sim` must be null or live.
uint64_t gcp_simulator_events(const struct GcpSimulator *sim);

// Copies the current spins into `buf` (`num_sites` bytes).
//
// # Safety
// `sim` must be live and `buf` must point to `len` writable bytes.
enum GcpStatus gcp_simulator_states(const struct GcpSimulator *sim, uint8_t *buf, size_t len);

// Runs an experiment described by a TOML document and writes its outputs
// to `out_dir` (or the directory named in the config when `out_dir` is
// null). `passed` receives whether every check passed.
//
// # Safety
// `config_toml` must be a nul-terminated string, `out_dir` null or
// nul-terminated, and `passed` writable.
enum GcpStatus gcp_run_experiment(const char *config_toml, const char *out_dir, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCP_HYDRO_H */
