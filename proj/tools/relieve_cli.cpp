// Command-line front end. Talks to the engine only through relieve.h.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "relieve/relieve.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

int exit_code(relieve_status s) {
  if (s == RELIEVE_OK) return kExitOk;
  if (s == RELIEVE_ERR_NUMERICAL) return kExitNumerical;
  return kExitValidation;
}

int report(relieve_status s) {
  if (s != RELIEVE_OK) std::fprintf(stderr, "error: %s\n", relieve_last_error());
  return exit_code(s);
}

// --threads wins, then RELIEVE_THREADS, then 1.
int resolve_threads(const std::optional<int>& flag) {
  if (flag) return *flag;
  const char* env = std::getenv("RELIEVE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) {
    std::fprintf(stderr, "warning: ignoring RELIEVE_THREADS='%s'\n", env);
    return 1;
  }
  return int(n);
}

struct SolveArgs {
  std::string problem_dir;
  std::string out_dir;
  std::optional<double> alpha;
  std::optional<double> lambda;
  std::optional<double> lr;
  int iters = 2000;
  int grid = 16;
  std::uint64_t seed = 0;
  std::optional<int> threads;
};

int run_solve(const SolveArgs& a) {
  if ((a.alpha && !(*a.alpha > 0)) || (a.lambda && !(*a.lambda > 0)) || (a.lr && !(*a.lr > 0))) {
    std::fprintf(stderr, "error: --alpha, --lambda and --lr must be positive\n");
    return kExitValidation;
  }
  relieve_problem* problem = nullptr;
  relieve_status s = relieve_problem_load(a.problem_dir.c_str(), &problem);
  if (s != RELIEVE_OK) return report(s);

  relieve_solve_options o;
  relieve_solve_options_default(&o);
  o.max_iters = a.iters;
  o.grid_size = a.grid;
  o.seed = a.seed;
  o.threads = resolve_threads(a.threads);
  if (a.alpha) o.alpha = *a.alpha;
  if (a.lambda) o.lambda = *a.lambda;
  if (a.lr) {
    // One knob for all blocks; the residual grid keeps its tenfold smaller rate.
    o.lr_pose = o.lr_log_scale = o.lr_confidence = *a.lr;
    o.lr_residual = *a.lr / 10.0;
  }

  relieve_solution* solution = nullptr;
  s = relieve_solve(problem, &o, &solution);
  relieve_problem_free(problem);
  if (s != RELIEVE_OK) return report(s);
  s = relieve_solution_save(solution, a.out_dir.c_str());
  relieve_solution_info info{};
  if (s == RELIEVE_OK) s = relieve_solution_info_get(solution, &info);
  relieve_solution_free(solution);
  if (s != RELIEVE_OK) return report(s);

  std::printf("views: %zu\niterations: %d\nconverged: %s\nfinal_loss: %.17g\n", info.views, info.iterations,
              info.converged ? "true" : "false", info.final_loss);
  if (info.diverged) {
    std::fprintf(stderr, "error: loss became non-finite; saved the last finite state\n");
    return kExitNumerical;
  }
  return kExitOk;
}

struct SimulateArgs {
  std::string out_dir;
  int views = 8;
  std::string res = "64x48";
  double corruption = 0.1;
  double match_noise = 0.5;
  std::string scale_range = "0.7:1.3";
  double outliers = 0.0;
  int matches = 200;
  std::uint64_t seed = 42;
};

int run_simulate(const SimulateArgs& a) {
  relieve_sim_options o;
  relieve_sim_options_default(&o);
  char tail = 0;
  if (std::sscanf(a.res.c_str(), "%dx%d%c", &o.width, &o.height, &tail) != 2) {
    std::fprintf(stderr, "error: --res expects WxH, got '%s'\n", a.res.c_str());
    return kExitValidation;
  }
  if (std::sscanf(a.scale_range.c_str(), "%lf:%lf%c", &o.scale_min, &o.scale_max, &tail) != 2) {
    std::fprintf(stderr, "error: --scale-range expects LO:HI, got '%s'\n", a.scale_range.c_str());
    return kExitValidation;
  }
  o.views = a.views;
  o.field_amplitude = a.corruption;
  o.pixel_sigma = a.match_noise;
  o.outlier_rate = a.outliers;
  o.matches_per_pair = a.matches;
  o.seed = a.seed;
  relieve_scene* scene = nullptr;
  relieve_status s = relieve_simulate(&o, &scene);
  if (s == RELIEVE_OK) s = relieve_scene_save(scene, a.out_dir.c_str());
  relieve_scene_free(scene);
  if (s == RELIEVE_OK) std::printf("wrote %s\n", a.out_dir.c_str());
  return report(s);
}

int run_eval(const std::string& solution_dir, const std::string& gt_dir) {
  relieve_solution* solution = nullptr;
  relieve_status s = relieve_solution_load(solution_dir.c_str(), &solution);
  if (s != RELIEVE_OK) return report(s);
  relieve_eval* eval = nullptr;
  s = relieve_evaluate(solution, gt_dir.c_str(), &eval);
  relieve_solution_free(solution);
  if (s != RELIEVE_OK) return report(s);

  relieve_eval_summary sum{};
  size_t views = 0;
  relieve_eval_summary_get(eval, &sum);
  relieve_eval_view_count(eval, &views);
  std::printf("point_rel: %.17g\npoint_tau: %.17g\ndepth_rel: %.17g\ndepth_tau: %.17g\n", sum.point_rel,
              sum.point_tau, sum.depth_rel, sum.depth_tau);
  std::printf("ate: %.17g\nauc30: %.17g\nmean_rotation_error_deg: %.17g\n", sum.ate, sum.auc30,
              sum.mean_rotation_error_deg);
  for (size_t v = 0; v < views; ++v) {
    relieve_eval_view ev{};
    relieve_eval_view_get(eval, v, &ev);
    std::printf("view.%zu.depth_rel: %.17g\nview.%zu.depth_tau: %.17g\n", v, ev.depth_rel, v, ev.depth_tau);
    std::printf("view.%zu.point_rel: %.17g\nview.%zu.point_tau: %.17g\n", v, ev.point_rel, v, ev.point_tau);
    std::printf("view.%zu.center_error: %.17g\n", v, ev.center_error);
  }
  relieve_eval_free(eval);
  return kExitOk;
}

int run_grad_check(int instances, int probes, double step, std::uint64_t seed) {
  double err = 0.0;
  const relieve_status s = relieve_grad_check(instances, probes, step, seed, &err);
  if (s != RELIEVE_OK) return report(s);
  std::printf("instances: %d\nprobes: %d\nstep: %.17g\nmax_relative_error: %.17g\n", instances, probes, step, err);
  return kExitOk;
}

int run_export_ply(const std::string& solution_dir, const std::string& out, double floor) {
  relieve_solution* solution = nullptr;
  relieve_status s = relieve_solution_load(solution_dir.c_str(), &solution);
  if (s != RELIEVE_OK) return report(s);
  size_t count = 0;
  s = relieve_export_ply(solution, out.c_str(), floor, &count);
  relieve_solution_free(solution);
  if (s == RELIEVE_OK) std::printf("vertices: %zu\n", count);
  return report(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relieve: multi-view registration from pseudo depths and sparse matches"};
  app.require_subcommand(1);

  SolveArgs solve;
  auto* cmd_solve = app.add_subcommand("solve", "optimize poses and depths for a problem directory");
  cmd_solve->add_option("problem_dir", solve.problem_dir, "directory with problem.json")->required();
  cmd_solve->add_option("-o,--out", solve.out_dir, "output solution directory")->required();
  cmd_solve->add_option("--alpha", solve.alpha, "confidence barrier weight (default 1.0)");
  cmd_solve->add_option("--lambda", solve.lambda, "registration weight (default 0.5)");
  cmd_solve->add_option("--iters", solve.iters, "maximum iterations")->capture_default_str();
  cmd_solve->add_option("--lr", solve.lr, "learning rate for pose, scale and confidence (residual uses lr/10)");
  cmd_solve->add_option("--grid", solve.grid, "residual grid size")->capture_default_str();
  cmd_solve->add_option("--seed", solve.seed, "seed recorded with the run")->capture_default_str();
  cmd_solve->add_option("--threads", solve.threads, "worker threads (else RELIEVE_THREADS, else 1)");

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "write a synthetic problem and its ground truth");
  cmd_sim->add_option("-o,--out", sim.out_dir, "output problem directory")->required();
  cmd_sim->add_option("--views", sim.views, "number of views")->capture_default_str();
  cmd_sim->add_option("--res", sim.res, "resolution WxH")->capture_default_str();
  cmd_sim->add_option("--corruption", sim.corruption, "amplitude of the smooth depth field")->capture_default_str();
  cmd_sim->add_option("--match-noise", sim.match_noise, "match noise sigma in pixels")->capture_default_str();
  cmd_sim->add_option("--scale-range", sim.scale_range, "per-view depth scale range LO:HI")->capture_default_str();
  cmd_sim->add_option("--outliers", sim.outliers, "fraction of outlier matches")->capture_default_str();
  cmd_sim->add_option("--matches", sim.matches, "matches per view pair")->capture_default_str();
  cmd_sim->add_option("--seed", sim.seed, "scene seed")->capture_default_str();

  std::string eval_solution, eval_gt;
  auto* cmd_eval = app.add_subcommand("eval", "score a solution against ground truth");
  cmd_eval->add_option("solution_dir", eval_solution)->required();
  cmd_eval->add_option("gt_dir", eval_gt, "ground-truth directory, or a problem directory containing one")->required();

  int gc_instances = 10;
  int gc_probes = 50;
  double gc_step = 1e-6;
  std::uint64_t gc_seed = 0;
  auto* cmd_gc = app.add_subcommand("grad-check", "finite-difference check on random small problems");
  cmd_gc->add_option("--instances", gc_instances)->capture_default_str();
  cmd_gc->add_option("--probes", gc_probes)->capture_default_str();
  cmd_gc->add_option("--step", gc_step)->capture_default_str();
  cmd_gc->add_option("--seed", gc_seed)->capture_default_str();

  std::string ply_solution, ply_out;
  double ply_floor = 0.5;
  auto* cmd_ply = app.add_subcommand("export-ply", "write confident points as a binary PLY");
  cmd_ply->add_option("solution_dir", ply_solution)->required();
  cmd_ply->add_option("-o,--out", ply_out, "output .ply file")->required();
  cmd_ply->add_option("--conf-floor", ply_floor, "minimum confidence W")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return kExitValidation;
  }

  if (*cmd_solve) return run_solve(solve);
  if (*cmd_sim) return run_simulate(sim);
  if (*cmd_eval) return run_eval(eval_solution, eval_gt);
  if (*cmd_gc) return run_grad_check(gc_instances, gc_probes, gc_step, gc_seed);
  if (*cmd_ply) return run_export_ply(ply_solution, ply_out, ply_floor);
  return kExitValidation;
}
