#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "relieve/geometry.hpp"
#include "relieve/types.hpp"

namespace relieve {

struct View {
  CameraIntrinsics intrinsics;
  DepthMap pseudo_depth;
};

/// Pseudo labels for one scene: per-view intrinsics and monocular depth plus
/// pairwise matches.
struct Problem {
  std::vector<View> views;
  std::vector<CorrespondenceSet> correspondences;
  HyperParams hyper;

  std::size_t view_count() const { return views.size(); }

  /// Shapes, positivity, pixel bounds, index validity. Does not require a
  /// connected pair graph; see `require_connected`.
  void validate() const;
  bool pair_graph_connected() const;
  void require_connected() const;
};

/// Continuous pixels must lie inside the bilinear support [0, w-1] x [0, h-1].
bool pixel_in_image(const Pixel& u, const CameraIntrinsics& k);

/// Offsets of one view's parameter block inside the flat gradient vector.
/// Block order: pose (omega xyz, v xyz), log-scale, residual grid, logits.
struct ViewBlock {
  std::size_t pose = 0;
  std::size_t log_scale = 0;
  std::size_t residual = 0;
  std::size_t logits = 0;
  std::size_t end = 0;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(const Problem& problem, int grid_size);

  const ViewBlock& view(std::size_t i) const { return blocks_[i]; }
  std::size_t view_count() const { return blocks_.size(); }
  std::size_t size() const { return size_; }
  int grid_size() const { return grid_size_; }

 private:
  std::vector<ViewBlock> blocks_;
  std::size_t size_ = 0;
  int grid_size_ = 0;
};

struct ViewParams {
  PoseSE3 pose;
  double log_scale = 0.0;
  std::vector<double> residual;  // G x G, row-major, log-space
  ConfidenceMap confidence;
};

/// Optimized quantities for every view. The predicted depth is
/// exp(log_scale + log(pseudo) + upsample(residual)).
struct SceneState {
  int grid_size = 16;
  std::vector<ViewParams> views;

  /// Pose tangent relative to identity.
  TangentSE3 pose_tangent(std::size_t i) const { return se3_log(views[i].pose); }

  /// Applies an increment laid out as in ParamLayout. Rotations are updated
  /// on the left about the camera center (R <- exp(d_omega) R), translations
  /// additively.
  void retract(const ParamLayout& layout, const Eigen::VectorXd& delta);

  /// View 0 is the gauge anchor: identity pose, zero log-scale.
  void apply_gauge_fix();
};

/// Identity poses, zero log-scales, zero residuals, zero logits (W = 1).
SceneState init_state(const Problem& problem, int grid_size = 16);

/// Zeroes gradient entries of the gauge anchor (view-0 pose and log-scale)
/// and removes the mean from every residual-grid block.
void project_gauge(const ParamLayout& layout, Eigen::VectorXd& gradient);

}  // namespace relieve
