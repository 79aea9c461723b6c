#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "relieve/geometry.hpp"
#include "relieve/problem.hpp"
#include "relieve/robust_stats.hpp"
#include "relieve/types.hpp"

namespace relieve {

/// Smoothed absolute value sqrt(x^2 + eps^2) - eps.
double charbonnier(double x, double eps);
double charbonnier_derivative(double x, double eps);

/// Per-pixel confidence term W*e - alpha*log(W) with W = 2*sigmoid(logit).
struct ConfidenceTerm {
  double value = 0.0;
  double d_logit = 0.0;  // (e - alpha/W) * dW/dlogit
  double d_residual = 0.0;  // W
};
ConfidenceTerm confidence_term(double residual, double logit, double alpha);

/// WMAD statistics of a predicted/pseudo pair, held constant (stop-gradient).
struct DepthStats {
  WmadStats pred;
  WmadStats pseudo;
};

struct DepthLossResult {
  double value = 0.0;               // mean over pixels
  std::vector<double> grad_pred;    // d value / d pred
  std::vector<double> grad_logits;  // d value / d logit
  DepthStats stats;
};

/// Ambiguity-aware scale-invariant depth loss of one view. Both maps are
/// normalized with the WMAD operator under the current confidence weights;
/// the statistics are constants for differentiation. Pass `frozen` to reuse
/// statistics from another evaluation point.
DepthLossResult depth_loss(std::span<const double> pred, std::span<const double> pseudo,
                           std::span<const double> logits, const HyperParams& hp,
                           const DepthStats* frozen = nullptr);

DepthLossResult depth_loss(const DepthMap& pred, const DepthMap& pseudo, const ConfidenceMap& conf,
                           const HyperParams& hp);

/// Angle between two vectors via atan2(|a x b|, a . b), radians in [0, pi].
/// Throws on a zero-length argument.
double vector_angle(const Vec3& a, const Vec3& b);

/// Same angle plus its gradient. |a x b| is floored at `eps` where it
/// divides; zero-length inputs yield angle 0 with zero gradient.
double vector_angle(const Vec3& a, const Vec3& b, double eps, Vec3& grad_a, Vec3& grad_b);

struct LossBreakdown {
  double depth_term = 0.0;
  double registration_term = 0.0;
  double total = 0.0;
  Eigen::VectorXd gradient;  // ParamLayout order
};

/// Frozen WMAD statistics for every view.
using FrozenStats = std::vector<DepthStats>;

/// Bilinear weights of a G x G log-residual grid (corner-aligned) for every
/// pixel of a w x h image.
class GridUpsampler {
 public:
  GridUpsampler() = default;
  GridUpsampler(int width, int height, int grid);

  struct Tap {
    int node[4];
    double weight[4];
  };
  const Tap& tap(std::size_t pixel) const { return taps_[pixel]; }
  std::vector<double> upsample(std::span<const double> grid) const;

 private:
  std::vector<Tap> taps_;
};

/// Inverse-depth bilinear lookup support of a continuous pixel.
struct DepthTap {
  std::size_t pixel[4];
  double weight[4];
};
DepthTap depth_tap(const Pixel& u, int width, int height);

/// 1 / sum(w / depth): exact on planar surfaces, whose inverse depth is
/// affine in pixel coordinates.
double sample_depth(const DepthTap& tap, std::span<const double> depth);

/// Derived per-view depth maps of a state.
struct DerivedDepth {
  std::vector<double> shape;      // pseudo * exp(upsampled residual)
  std::vector<double> predicted;  // exp(log_scale) * shape
};

/// The full weighted objective over a problem. Evaluation is parallel over
/// views and correspondence sets with a fixed reduction order, so the result
/// does not depend on the thread count.
class Objective {
 public:
  Objective(const Problem& problem, int grid_size, int threads = 1);

  const Problem& problem() const { return *problem_; }
  const ParamLayout& layout() const { return layout_; }
  int grid_size() const { return layout_.grid_size(); }

  LossBreakdown evaluate(const SceneState& state, const FrozenStats* frozen = nullptr) const;
  FrozenStats freeze(const SceneState& state) const;

  DerivedDepth derive(const SceneState& state, std::size_t view) const;

  /// Registration term alone (mean angle, radians), no gradient.
  double registration_value(const SceneState& state) const;

 private:
  const Problem* problem_;
  ParamLayout layout_;
  int threads_;
  std::vector<GridUpsampler> upsamplers_;
};

/// Mean trigonometric reprojection angle over both directions of every match.
double registration_loss(const SceneState& state, const Problem& problem);

/// depth term + lambda * registration term, with gradient.
LossBreakdown total_loss(const SceneState& state, const Problem& problem, int threads = 1);

/// Max over `probe_count` random parameters of
/// |g_analytic - g_fd| / max(1, |g_fd|), central differences at `step` with
/// statistics frozen at the base state.
double finite_difference_check(const SceneState& state, const Problem& problem, int probe_count,
                               double step = 1e-6, std::uint64_t seed = 0);

}  // namespace relieve
