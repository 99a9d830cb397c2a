#ifndef DUMBBELL_H
#define DUMBBELL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DbStatus {
  DB_STATUS_OK = 0,
  DB_STATUS_NULL_POINTER = 1,
  DB_STATUS_INVALID_ARGUMENT = 2,
  DB_STATUS_INVALID_MESH = 3,
  DB_STATUS_NOT_SEPARATING = 4,
  DB_STATUS_NUMERICAL = 5,
  DB_STATUS_IO = 6,
  DB_STATUS_OUT_OF_RANGE = 7,
  DB_STATUS_PANIC = 8,
} DbStatus;

// Opaque mesh handle.
typedef struct DbMesh DbMesh;

// Opaque eigen solution: eigenvalues and vertex-indexed eigenvectors,
// index 0 being the constant mode.
typedef struct DbSolution DbSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *db_version(void);

// Copies the last error message of this thread into `buf` (truncated, always
// NUL-terminated) and returns the full message length, or 0 if none.
//
// # Safety
// `buf` must be valid for `len` bytes or null with `len == 0`.
size_t db_last_error(char *buf, size_t len);

// Unit box `[0,1]^d` with `n` cells per axis.
//
// # Safety
// `out` must be a valid pointer.
enum DbStatus db_mesh_box(size_t d, size_t n, struct DbMesh **out);

// Loads an ASCII mesh file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum DbStatus db_mesh_load(const char *path, struct DbMesh **out);

// # Safety
// `mesh` must come from a `db_mesh_*` constructor and not be used afterwards.
void db_mesh_free(struct DbMesh *mesh);

// # Safety
// `mesh` must be a live handle or null (returns 0).
size_t db_mesh_num_vertices(const struct DbMesh *mesh);

// # Safety
// `mesh` must be a live handle or null (returns 0).
size_t db_mesh_num_cells(const struct DbMesh *mesh);

// Volume-preserving outer constant for the step profile.
//
// # Safety
// `out` must be a valid pointer.
enum DbStatus db_kappa(double epsilon,
                       double vol_collar,
                       double vol_complement,
                       size_t d,
                       double *out);

// Lowest `modes` eigenpairs (constant mode included) of the step dumbbell
// metric with hypersurface `{x1 = offset}` and collar half-width `eta`.
//
// # Safety
// `mesh` must be a live handle and `out` a valid pointer.
enum DbStatus db_solve_plane(const struct DbMesh *mesh,
                             double offset,
                             double eta,
                             double epsilon,
                             size_t modes,
                             double tol,
                             struct DbSolution **out);

// # Safety
// `sol` must come from `db_solve_plane` and not be used afterwards.
void db_solution_free(struct DbSolution *sol);

// # Safety
// `sol` must be a live handle or null (returns 0).
size_t db_solution_num_modes(const struct DbSolution *sol);

// # Safety
// `sol` must be a live handle or null (returns NaN).
double db_solution_kappa(const struct DbSolution *sol);

// # Safety
// `sol` must be a live handle and `out` a valid pointer.
enum DbStatus db_solution_eigenvalue(const struct DbSolution *sol, size_t k, double *out);

// Copies eigenvector `k` into `buf`, which must hold exactly one value per
// mesh vertex.
//
// # Safety
// `sol` must be a live handle and `buf` valid for `len` doubles.
enum DbStatus db_solution_eigenvector(const struct DbSolution *sol,
                                      size_t k,
                                      double *buf,
                                      size_t len);

// Runs the scenario in `config_path`, writes its report into `out_dir` and
// stores 1 in `passed` iff every verdict passed.
//
// # Safety
// Both paths must be NUL-terminated strings and `passed` a valid pointer.
enum DbStatus db_run_scenario(const char *config_path, const char *out_dir, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUMBBELL_H */
