#include "relieve/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "relieve/error.hpp"

namespace relieve {

void OptimConfig::validate() const {
  if (max_iters < 1) throw domain_error("optimizer: max_iters must be >= 1");
  if (grid_size < 1) throw domain_error("optimizer: grid size must be >= 1");
  for (double lr : {lr_pose, lr_log_scale, lr_residual, lr_confidence})
    if (!(lr > 0) || !std::isfinite(lr)) throw domain_error("optimizer: learning rates must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw domain_error("optimizer: betas must be in [0, 1)");
  if (!(adam_eps > 0)) throw domain_error("optimizer: adam eps must be positive");
  if (!(final_lr_fraction > 0 && final_lr_fraction <= 1)) throw domain_error("optimizer: final_lr_fraction in (0, 1]");
  if (convergence_window < 1) throw domain_error("optimizer: convergence window must be >= 1");
  if (threads < 1) throw domain_error("optimizer: threads must be >= 1");
}

double cosine_factor(int iteration, int max_iters, double final_fraction) {
  const double progress = std::clamp(double(iteration) / double(max_iters), 0.0, 1.0);
  return final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(Eigen::VectorXd learning_rates, double beta1, double beta2, double eps)
    : lr_(std::move(learning_rates)),
      m_(Eigen::VectorXd::Zero(lr_.size())),
      v_(Eigen::VectorXd::Zero(lr_.size())),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

Eigen::VectorXd Adam::step(const Eigen::VectorXd& gradient, double lr_factor) {
  if (gradient.size() != lr_.size()) throw domain_error("adam: gradient length does not match parameters");
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (!std::isfinite(gradient[i]))
      throw numerical_error("adam: non-finite gradient entry at index " + std::to_string(i));
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
  v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  Eigen::VectorXd delta(gradient.size());
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    delta[i] = -lr_factor * lr_[i] * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  return delta;
}

Eigen::VectorXd block_learning_rates(const ParamLayout& layout, const OptimConfig& config) {
  Eigen::VectorXd lr(Eigen::Index(layout.size()));
  for (std::size_t v = 0; v < layout.view_count(); ++v) {
    const ViewBlock& b = layout.view(v);
    lr.segment(Eigen::Index(b.pose), 6).setConstant(config.lr_pose);
    lr[Eigen::Index(b.log_scale)] = config.lr_log_scale;
    lr.segment(Eigen::Index(b.residual), Eigen::Index(b.logits - b.residual)).setConstant(config.lr_residual);
    lr.segment(Eigen::Index(b.logits), Eigen::Index(b.end - b.logits)).setConstant(config.lr_confidence);
  }
  return lr;
}

void step(SceneState& state, const ParamLayout& layout, Eigen::VectorXd gradient, Adam& adam,
          const OptimConfig& config, int iteration) {
  project_gauge(layout, gradient);
  Eigen::VectorXd delta = adam.step(gradient, cosine_factor(iteration, config.max_iters, config.final_lr_fraction));
  project_gauge(layout, delta);
  state.retract(layout, delta);
  state.apply_gauge_fix();
}

std::vector<PointMap> export_pointmap(const SceneState& state, const Problem& problem) {
  const Objective objective(problem, state.grid_size);
  std::vector<PointMap> maps;
  for (std::size_t v = 0; v < problem.views.size(); ++v) {
    const CameraIntrinsics& k = problem.views[v].intrinsics;
    const DerivedDepth d = objective.derive(state, v);
    PointMap points(d.predicted.size());
    for (int y = 0; y < k.height; ++y)
      for (int x = 0; x < k.width; ++x) {
        const std::size_t i = std::size_t(y) * k.width + x;
        points[i] = to_world(backproject({double(x), double(y)}, d.predicted[i], k), state.views[v].pose);
      }
    maps.push_back(std::move(points));
  }
  return maps;
}

Solution make_solution(const Problem& problem, SceneState state) {
  const Objective objective(problem, state.grid_size);
  Solution s;
  for (std::size_t v = 0; v < problem.views.size(); ++v) {
    const DepthMap& pseudo = problem.views[v].pseudo_depth;
    const DerivedDepth d = objective.derive(state, v);
    DepthMap depth(pseudo.width, pseudo.height);
    depth.values = d.predicted;
    DepthMap conf(pseudo.width, pseudo.height);
    conf.values = state.views[v].confidence.weights();
    s.poses.push_back(state.views[v].pose);
    s.depths.push_back(std::move(depth));
    s.confidences.push_back(std::move(conf));
  }
  s.point_maps = export_pointmap(state, problem);
  s.state = std::move(state);
  return s;
}

Solution optimize(const Problem& problem, SceneState initial, const OptimConfig& config) {
  config.validate();
  if (initial.grid_size != config.grid_size) throw domain_error("optimize: state grid size differs from config");
  const Objective objective(problem, config.grid_size, config.threads);
  const ParamLayout& layout = objective.layout();
  Adam adam(block_learning_rates(layout, config), config.beta1, config.beta2, config.adam_eps);

  SceneState state = std::move(initial);
  state.apply_gauge_fix();
  SceneState last_finite = state;
  std::vector<LossRecord> history;
  bool converged = false;
  bool diverged = false;
  int quiet = 0;
  int iteration = 0;
  for (;; ++iteration) {
    const LossBreakdown loss = objective.evaluate(state);
    if (!std::isfinite(loss.total) || !loss.gradient.allFinite()) {
      diverged = true;
      state = last_finite;
      break;
    }
    if (!history.empty()) {
      const double prev = history.back().total;
      const double rel = std::abs(loss.total - prev) / std::max(std::abs(prev), 1e-300);
      quiet = rel < config.convergence_tol ? quiet + 1 : 0;
    }
    history.push_back({loss.total, loss.depth_term, loss.registration_term});
    if (quiet >= config.convergence_window) {
      converged = true;
      break;
    }
    if (iteration == config.max_iters) break;
    last_finite = state;
    step(state, layout, loss.gradient, adam, config, iteration);
  }

  Solution s = make_solution(problem, std::move(state));
  s.loss_history = std::move(history);
  s.converged = converged;
  s.diverged = diverged;
  s.iterations = diverged ? std::max(iteration - 1, 0) : iteration;
  return s;
}

Solution solve(const Problem& problem, const OptimConfig& config) {
  problem.validate();
  problem.require_connected();
  return optimize(problem, init_state(problem, config.grid_size), config);
}

}  // namespace relieve
