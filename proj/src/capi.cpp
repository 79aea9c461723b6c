#include "relieve/relieve.h"

#include <algorithm>
#include <exception>
#include <new>
#include <string>

#include "relieve/error.hpp"
#include "relieve/io.hpp"
#include "relieve/losses.hpp"
#include "relieve/metrics.hpp"
#include "relieve/optimizer.hpp"
#include "relieve/scene_sim.hpp"

struct relieve_problem {
  relieve::Problem problem;
};

struct relieve_scene {
  relieve::SimulatedProblem sim;
};

struct relieve_solution {
  relieve::Solution solution;
  relieve::OptimConfig config;
};

struct relieve_eval {
  relieve::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

relieve_status fail(relieve_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

relieve_status status_of(relieve::ErrorKind kind) {
  switch (kind) {
    case relieve::ErrorKind::Validation:
      return RELIEVE_ERR_VALIDATION;
    case relieve::ErrorKind::Numerical:
      return RELIEVE_ERR_NUMERICAL;
    case relieve::ErrorKind::Io:
      return RELIEVE_ERR_IO;
    case relieve::ErrorKind::Domain:
      return RELIEVE_ERR_INVALID_ARGUMENT;
  }
  return RELIEVE_ERR_INTERNAL;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
relieve_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return RELIEVE_OK;
  } catch (const relieve::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(RELIEVE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RELIEVE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RELIEVE_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* message) {
  if (!ok) throw relieve::domain_error(message);
}

}  // namespace

extern "C" {

const char* relieve_last_error(void) { return g_last_error.c_str(); }

const char* relieve_version(void) { return "0.1.0"; }

relieve_status relieve_problem_load(const char* dir, relieve_problem** out) {
  return guarded([&] {
    require(dir && out, "relieve_problem_load: NULL argument");
    *out = nullptr;
    auto* p = new relieve_problem{relieve::load_problem(dir)};
    *out = p;
  });
}

relieve_status relieve_problem_save(const relieve_problem* problem, const char* dir) {
  return guarded([&] {
    require(problem && dir, "relieve_problem_save: NULL argument");
    relieve::save_problem(problem->problem, dir);
  });
}

relieve_status relieve_problem_view_count(const relieve_problem* problem, size_t* out) {
  return guarded([&] {
    require(problem && out, "relieve_problem_view_count: NULL argument");
    *out = problem->problem.view_count();
  });
}

void relieve_problem_free(relieve_problem* problem) { delete problem; }

void relieve_sim_options_default(relieve_sim_options* o) {
  if (!o) return;
  const relieve::CorruptionConfig c;
  const relieve::MatchNoiseConfig m;
  *o = relieve_sim_options{8, 64, 48, c.field_amplitude, c.scale_min, c.scale_max, m.pixel_sigma,
                           m.outlier_rate, m.matches_per_pair, 42};
}

relieve_status relieve_simulate(const relieve_sim_options* o, relieve_scene** out) {
  return guarded([&] {
    require(o && out, "relieve_simulate: NULL argument");
    *out = nullptr;
    require(o->views >= 2, "relieve_simulate: at least two views are required");
    require(o->width >= 2 && o->height >= 2, "relieve_simulate: resolution must be at least 2x2");
    relieve::CorruptionConfig c;
    c.field_amplitude = o->field_amplitude;
    c.scale_min = o->scale_min;
    c.scale_max = o->scale_max;
    relieve::MatchNoiseConfig m;
    m.pixel_sigma = o->pixel_sigma;
    m.outlier_rate = o->outlier_rate;
    m.matches_per_pair = o->matches_per_pair;
    *out = new relieve_scene{relieve::simulate(o->views, o->width, o->height, c, m, o->seed)};
  });
}

relieve_status relieve_scene_save(const relieve_scene* scene, const char* dir) {
  return guarded([&] {
    require(scene && dir, "relieve_scene_save: NULL argument");
    const relieve::fs::path root(dir);
    relieve::save_problem(scene->sim.problem, root);
    relieve::save_ground_truth(scene->sim.scene, root / "ground_truth");
  });
}

relieve_status relieve_scene_problem(const relieve_scene* scene, relieve_problem** out) {
  return guarded([&] {
    require(scene && out, "relieve_scene_problem: NULL argument");
    *out = new relieve_problem{scene->sim.problem};
  });
}

void relieve_scene_free(relieve_scene* scene) { delete scene; }

void relieve_solve_options_default(relieve_solve_options* o) {
  if (!o) return;
  const relieve::OptimConfig c;
  *o = relieve_solve_options{c.max_iters, c.grid_size, 0.0, 0.0, c.lr_pose, c.lr_log_scale,
                             c.lr_residual, c.lr_confidence, c.seed, c.threads};
}

relieve_status relieve_solve(const relieve_problem* problem, const relieve_solve_options* o, relieve_solution** out) {
  return guarded([&] {
    require(problem && o && out, "relieve_solve: NULL argument");
    *out = nullptr;
    relieve::Problem p = problem->problem;
    if (o->alpha > 0) p.hyper.alpha = o->alpha;
    if (o->lambda > 0) p.hyper.lambda = o->lambda;
    relieve::OptimConfig config;
    config.max_iters = o->max_iters;
    config.grid_size = o->grid_size;
    config.lr_pose = o->lr_pose;
    config.lr_log_scale = o->lr_log_scale;
    config.lr_residual = o->lr_residual;
    config.lr_confidence = o->lr_confidence;
    config.seed = o->seed;
    config.threads = o->threads;
    p.hyper.validate();
    config.validate();
    *out = new relieve_solution{relieve::solve(p, config), config};
  });
}

relieve_status relieve_solution_save(const relieve_solution* s, const char* dir) {
  return guarded([&] {
    require(s && dir, "relieve_solution_save: NULL argument");
    relieve::save_solution(s->solution, s->config, dir);
  });
}

relieve_status relieve_solution_load(const char* dir, relieve_solution** out) {
  return guarded([&] {
    require(dir && out, "relieve_solution_load: NULL argument");
    *out = nullptr;
    relieve::SolutionBundle b = relieve::load_solution(dir);
    *out = new relieve_solution{std::move(b.solution), b.config};
  });
}

relieve_status relieve_solution_info_get(const relieve_solution* s, relieve_solution_info* out) {
  return guarded([&] {
    require(s && out, "relieve_solution_info_get: NULL argument");
    const relieve::Solution& sol = s->solution;
    *out = relieve_solution_info{sol.poses.size(), sol.iterations, sol.converged ? 1 : 0, sol.diverged ? 1 : 0,
                                 sol.loss_history.empty() ? 0.0 : sol.loss_history.back().total};
  });
}

relieve_status relieve_solution_pose(const relieve_solution* s, size_t view, double rotation[9], double translation[3]) {
  return guarded([&] {
    require(s && rotation && translation, "relieve_solution_pose: NULL argument");
    require(view < s->solution.poses.size(), "relieve_solution_pose: view index out of range");
    const relieve::PoseSE3& p = s->solution.poses[view];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) rotation[3 * i + j] = p.rotation(i, j);
      translation[i] = p.translation[i];
    }
  });
}

void relieve_solution_free(relieve_solution* s) { delete s; }

relieve_status relieve_export_ply(const relieve_solution* s, const char* path, double confidence_floor,
                                  size_t* vertex_count) {
  return guarded([&] {
    require(s && path, "relieve_export_ply: NULL argument");
    const size_t n = relieve::export_ply(s->solution.point_maps, s->solution.confidences, path, confidence_floor);
    if (vertex_count) *vertex_count = n;
  });
}

relieve_status relieve_evaluate(const relieve_solution* s, const char* gt_dir, relieve_eval** out) {
  return guarded([&] {
    require(s && gt_dir && out, "relieve_evaluate: NULL argument");
    *out = nullptr;
    const relieve::GroundTruthScene truth = relieve::load_ground_truth(gt_dir);
    *out = new relieve_eval{relieve::evaluate(s->solution, truth)};
  });
}

relieve_status relieve_eval_summary_get(const relieve_eval* e, relieve_eval_summary* out) {
  return guarded([&] {
    require(e && out, "relieve_eval_summary_get: NULL argument");
    const relieve::EvalReport& r = e->report;
    *out = relieve_eval_summary{r.point_rel, r.point_tau, r.depth_rel, r.depth_tau,
                                r.ate,       r.auc30,     r.mean_rotation_error_deg};
  });
}

relieve_status relieve_eval_view_count(const relieve_eval* e, size_t* out) {
  return guarded([&] {
    require(e && out, "relieve_eval_view_count: NULL argument");
    *out = e->report.views.size();
  });
}

relieve_status relieve_eval_view_get(const relieve_eval* e, size_t view, relieve_eval_view* out) {
  return guarded([&] {
    require(e && out, "relieve_eval_view_get: NULL argument");
    require(view < e->report.views.size(), "relieve_eval_view_get: view index out of range");
    const relieve::ViewMetrics& v = e->report.views[view];
    *out = relieve_eval_view{v.depth_rel, v.depth_tau, v.point_rel, v.point_tau, v.center_error};
  });
}

void relieve_eval_free(relieve_eval* e) { delete e; }

relieve_status relieve_grad_check(int instances, int probes, double step, uint64_t seed, double* max_error) {
  return guarded([&] {
    require(max_error, "relieve_grad_check: NULL argument");
    require(instances >= 1 && probes >= 1 && step > 0, "relieve_grad_check: counts and step must be positive");
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
      const relieve::CheckInstance inst = relieve::random_check_instance(seed + std::uint64_t(k));
      worst = std::max(worst, relieve::finite_difference_check(inst.state, inst.problem, probes, step, seed + k));
    }
    *max_error = worst;
  });
}

}  // extern "C"
