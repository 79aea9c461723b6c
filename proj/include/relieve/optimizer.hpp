#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "relieve/losses.hpp"
#include "relieve/problem.hpp"

namespace relieve {

struct OptimConfig {
  int max_iters = 2000;
  int grid_size = 16;
  double lr_pose = 1e-2;
  double lr_log_scale = 1e-2;
  double lr_residual = 1e-3;
  double lr_confidence = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double final_lr_fraction = 1e-2;  // cosine schedule floor
  double convergence_tol = 1e-7;    // relative change of the total loss
  int convergence_window = 50;      // consecutive iterations below tol
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// Cosine decay from 1 at iteration 0 to `final_fraction` at `max_iters`.
double cosine_factor(int iteration, int max_iters, double final_fraction);

/// Adam over a flat parameter vector with one learning rate per entry.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::VectorXd learning_rates, double beta1, double beta2, double eps);

  /// Returns the increment to apply (already negated). Throws a numerical
  /// error on non-finite gradient entries.
  Eigen::VectorXd step(const Eigen::VectorXd& gradient, double lr_factor);

  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  int steps() const { return t_; }

 private:
  Eigen::VectorXd lr_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  int t_ = 0;
};

/// Learning rate for every entry of the layout, by block.
Eigen::VectorXd block_learning_rates(const ParamLayout& layout, const OptimConfig& config);

/// One optimizer iteration: gauge projection, Adam update with the cosine
/// factor for `iteration`, retraction, gauge fix.
void step(SceneState& state, const ParamLayout& layout, Eigen::VectorXd gradient, Adam& adam,
          const OptimConfig& config, int iteration);

struct LossRecord {
  double total = 0.0;
  double depth = 0.0;
  double registration = 0.0;
};

using PointMap = std::vector<Vec3>;

struct Solution {
  std::vector<PoseSE3> poses;
  std::vector<DepthMap> depths;       // predicted depth
  std::vector<DepthMap> confidences;  // W in (0, 2)
  std::vector<PointMap> point_maps;   // world frame, row-major
  std::vector<LossRecord> loss_history;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  SceneState state;
};

/// World-frame point per pixel: to_world(backproject(u, depth(u), K), pose).
std::vector<PointMap> export_pointmap(const SceneState& state, const Problem& problem);

/// Builds every derived field of a Solution from a state.
Solution make_solution(const Problem& problem, SceneState state);

/// Runs the loop from `initial` without the connectivity check.
Solution optimize(const Problem& problem, SceneState initial, const OptimConfig& config);

/// Validates the problem (including a connected pair graph), then optimizes
/// from init_state.
Solution solve(const Problem& problem, const OptimConfig& config);

}  // namespace relieve
