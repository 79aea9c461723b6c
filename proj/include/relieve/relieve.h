/* C interface to the relieve registration engine.
 *
 * Every call returns a relieve_status. On failure a message is available from
 * relieve_last_error() on the calling thread until that thread's next call.
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function (passing NULL is allowed).
 */
#ifndef RELIEVE_H
#define RELIEVE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(RELIEVE_BUILDING)
#define RELIEVE_API __declspec(dllexport)
#else
#define RELIEVE_API __declspec(dllimport)
#endif
#else
#define RELIEVE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum relieve_status {
  RELIEVE_OK = 0,
  RELIEVE_ERR_VALIDATION = 1,       /* malformed input data or files */
  RELIEVE_ERR_NUMERICAL = 2,        /* non-finite values, divergence */
  RELIEVE_ERR_IO = 3,               /* filesystem failure */
  RELIEVE_ERR_INVALID_ARGUMENT = 4, /* NULL handle, out-of-range index or option */
  RELIEVE_ERR_INTERNAL = 5
} relieve_status;

typedef struct relieve_problem relieve_problem;
typedef struct relieve_solution relieve_solution;
typedef struct relieve_scene relieve_scene; /* simulated problem plus ground truth */
typedef struct relieve_eval relieve_eval;

RELIEVE_API const char* relieve_last_error(void);
RELIEVE_API const char* relieve_version(void);

/* ---- problems ---- */

RELIEVE_API relieve_status relieve_problem_load(const char* dir, relieve_problem** out);
RELIEVE_API relieve_status relieve_problem_save(const relieve_problem* problem, const char* dir);
RELIEVE_API relieve_status relieve_problem_view_count(const relieve_problem* problem, size_t* out);
RELIEVE_API void relieve_problem_free(relieve_problem* problem);

/* ---- simulation ---- */

typedef struct relieve_sim_options {
  int views;
  int width;
  int height;
  double field_amplitude; /* max |log| of the smooth depth field */
  double scale_min;       /* per-view depth scale, log-uniform */
  double scale_max;
  double pixel_sigma; /* Gaussian match noise in pixels */
  double outlier_rate;
  int matches_per_pair;
  uint64_t seed;
} relieve_sim_options;

RELIEVE_API void relieve_sim_options_default(relieve_sim_options* options);
RELIEVE_API relieve_status relieve_simulate(const relieve_sim_options* options, relieve_scene** out);
/* Writes the problem into `dir` and the ground truth into `dir`/ground_truth. */
RELIEVE_API relieve_status relieve_scene_save(const relieve_scene* scene, const char* dir);
RELIEVE_API relieve_status relieve_scene_problem(const relieve_scene* scene, relieve_problem** out);
RELIEVE_API void relieve_scene_free(relieve_scene* scene);

/* ---- solving ---- */

typedef struct relieve_solve_options {
  int max_iters;
  int grid_size;
  double alpha;  /* <= 0 keeps the problem's value */
  double lambda; /* <= 0 keeps the problem's value */
  double lr_pose;
  double lr_log_scale;
  double lr_residual;
  double lr_confidence;
  uint64_t seed;
  int threads;
} relieve_solve_options;

typedef struct relieve_solution_info {
  size_t views;
  int iterations;
  int converged;
  int diverged;
  double final_loss;
} relieve_solution_info;

RELIEVE_API void relieve_solve_options_default(relieve_solve_options* options);
/* A diverged run still returns RELIEVE_OK and a solution holding the last
 * finite state; check relieve_solution_info.diverged. */
RELIEVE_API relieve_status relieve_solve(const relieve_problem* problem, const relieve_solve_options* options,
                                         relieve_solution** out);
RELIEVE_API relieve_status relieve_solution_save(const relieve_solution* solution, const char* dir);
RELIEVE_API relieve_status relieve_solution_load(const char* dir, relieve_solution** out);
RELIEVE_API relieve_status relieve_solution_info_get(const relieve_solution* solution, relieve_solution_info* out);
/* Camera-to-world pose: row-major rotation and translation (camera center). */
RELIEVE_API relieve_status relieve_solution_pose(const relieve_solution* solution, size_t view, double rotation[9],
                                                 double translation[3]);
RELIEVE_API void relieve_solution_free(relieve_solution* solution);

/* Binary PLY of points whose confidence is >= floor. */
RELIEVE_API relieve_status relieve_export_ply(const relieve_solution* solution, const char* path,
                                              double confidence_floor, size_t* vertex_count);

/* ---- evaluation ---- */

typedef struct relieve_eval_summary {
  double point_rel;
  double point_tau;
  double depth_rel;
  double depth_tau;
  double ate;
  double auc30;
  double mean_rotation_error_deg;
} relieve_eval_summary;

typedef struct relieve_eval_view {
  double depth_rel;
  double depth_tau;
  double point_rel;
  double point_tau;
  double center_error;
} relieve_eval_view;

/* `gt_dir` is a ground-truth directory or a problem directory containing one. */
RELIEVE_API relieve_status relieve_evaluate(const relieve_solution* solution, const char* gt_dir, relieve_eval** out);
RELIEVE_API relieve_status relieve_eval_summary_get(const relieve_eval* eval, relieve_eval_summary* out);
RELIEVE_API relieve_status relieve_eval_view_count(const relieve_eval* eval, size_t* out);
RELIEVE_API relieve_status relieve_eval_view_get(const relieve_eval* eval, size_t view, relieve_eval_view* out);
RELIEVE_API void relieve_eval_free(relieve_eval* eval);

/* ---- gradient check ---- */

/* Builds `instances` random small problems from `seed` and returns the largest
 * finite-difference relative error over `probes` parameters each. */
RELIEVE_API relieve_status relieve_grad_check(int instances, int probes, double step, uint64_t seed,
                                              double* max_error);

#ifdef __cplusplus
}
#endif

#endif /* RELIEVE_H */
