/* C interface of the llg finite element magnetization dynamics library. */

#ifndef LLG_H
#define LLG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible function.
typedef enum LlgStatus {
  LLG_STATUS_OK = 0,
  LLG_STATUS_INVALID_ARGUMENT = 1,
  LLG_STATUS_NUMERICAL_ERROR = 2,
  LLG_STATUS_IO_ERROR = 3,
  LLG_STATUS_PANIC = 4,
} LlgStatus;

// Field-term extrapolation strategy.
typedef enum LlgStrategy {
  LLG_STRATEGY_MIDPOINT = 0,
  LLG_STRATEGY_ADAMS_BASHFORTH = 1,
  LLG_STRATEGY_EXPLICIT_EULER = 2,
} LlgStrategy;

// Opaque tetrahedral mesh handle.
typedef struct LlgMesh LlgMesh;

// Opaque simulation handle: mesh, assembled operators and time-stepping
// state.
typedef struct LlgSim LlgSim;

// Simulation parameters; booleans are 0/1 flags.
typedef struct LlgSimParams {
  // Time-step size (nondimensional), positive.
  double k;
  // Gilbert damping, positive.
  double alpha;
  // Exchange constant, positive.
  double c_ex;
  // Fixed-point stopping tolerance, positive.
  double epsilon;
  enum LlgStrategy strategy;
  // 0 selects the default budget.
  size_t max_sweeps;
  // Enable the FEM-BEM stray field.
  int32_t enable_stray;
  // Boundary quadrature points per panel: 1, 3 or 7.
  size_t quad_points;
  // Relative tolerance of the inner conjugate-gradient solves.
  double cg_rel_tol;
  int32_t enable_anisotropy;
  // Easy axis, unit length.
  double aniso_axis[3];
  int32_t enable_zhang_li;
  // Spin velocity (nondimensional).
  double zl_velocity[3];
  // Ratio of nonadiabaticity, positive.
  double zl_xi;
  // Constant applied field.
  double applied_field[3];
} LlgSimParams;

// Per-step report mirrored to C.
typedef struct LlgStepReport {
  // Time after the step.
  double t;
  size_t sweeps;
  // Final field residual of the fixed-point iteration.
  double residual;
  size_t stray_solves;
  double energy;
  double energy_residual;
  // Largest nodal norm deviation from the initial state.
  double norm_dev_max;
  double avg_m[3];
} LlgStepReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the message of the most recent error on this thread into `buf`
// (NUL terminated, truncated to `len`). Returns the full message length
// in bytes, excluding the terminator.
//
// # Safety
// `buf` must point to at least `len` writable bytes, or be null (then only
// the required length is returned).
size_t llg_last_error_message(char *buf, size_t len);

// Build a structured box mesh of `nx * ny * nz` cells, six tetrahedra per
// cell.
//
// # Safety
// `lo` and `hi` must point to three readable doubles; `out` must be a
// valid location for a pointer.
enum LlgStatus llg_mesh_box(size_t nx,
                            size_t ny,
                            size_t nz,
                            const double *lo,
                            const double *hi,
                            struct LlgMesh **out);

// Load a mesh from the plain-text `tetmesh v1` format.
//
// # Safety
// `path` must be a NUL-terminated string, `out` a valid location.
enum LlgStatus llg_mesh_load(const char *path, struct LlgMesh **out);

// Save a mesh in the plain-text `tetmesh v1` format.
//
// # Safety
// `mesh` must be a live handle, `path` a NUL-terminated string.
enum LlgStatus llg_mesh_save(const struct LlgMesh *mesh, const char *path);

// # Safety
// `mesh` must be a live handle or null.
size_t llg_mesh_vertex_count(const struct LlgMesh *mesh);

// # Safety
// `mesh` must be a live handle or null.
size_t llg_mesh_tet_count(const struct LlgMesh *mesh);

// # Safety
// `mesh` must be a live handle or null.
size_t llg_mesh_boundary_face_count(const struct LlgMesh *mesh);

// Release a mesh handle. Passing null is a no-op.
//
// # Safety
// `mesh` must have been returned by this library and not freed before.
void llg_mesh_free(struct LlgMesh *mesh);

// Create a simulation on a mesh from an initial magnetization given as
// `3 * vertex_count` doubles (x, y, z per node).
//
// # Safety
// `mesh` must be a live handle, `params` readable, `m0` must point to
// `3 * llg_mesh_vertex_count(mesh)` doubles, `out` must be writable.
enum LlgStatus llg_sim_new(const struct LlgMesh *mesh,
                           const struct LlgSimParams *params,
                           const double *m0,
                           struct LlgSim **out);

// Advance one time step; fills `report` when non-null.
//
// # Safety
// `sim` must be a live handle; `report` null or writable.
enum LlgStatus llg_sim_step(struct LlgSim *sim, struct LlgStepReport *report);

// Advance `steps` time steps; fills `report` with the last step when
// non-null.
//
// # Safety
// `sim` must be a live handle; `report` null or writable.
enum LlgStatus llg_sim_run(struct LlgSim *sim, size_t steps, struct LlgStepReport *report);

// # Safety
// `sim` must be a live handle or null.
size_t llg_sim_node_count(const struct LlgSim *sim);

// Copy the current magnetization into `3 * node_count` doubles.
//
// # Safety
// `sim` must be a live handle and `out` must point to
// `3 * llg_sim_node_count(sim)` writable doubles.
enum LlgStatus llg_sim_magnetization(const struct LlgSim *sim, double *out);

// Volume-weighted mean magnetization.
//
// # Safety
// `sim` must be a live handle, `out` must point to three writable doubles.
enum LlgStatus llg_sim_average_magnetization(const struct LlgSim *sim, double *out);

// Write the current state as a legacy ASCII VTK unstructured grid.
//
// # Safety
// `sim` must be a live handle, `path` a NUL-terminated string.
enum LlgStatus llg_sim_write_vtk(const struct LlgSim *sim, const char *path);

// Release a simulation handle. Passing null is a no-op.
//
// # Safety
// `sim` must have been returned by this library and not freed before.
void llg_sim_free(struct LlgSim *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLG_H */
