#include "relieve/problem.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "relieve/error.hpp"

namespace relieve {

std::vector<double> ConfidenceMap::weights() const {
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) w[i] = confidence_from_logit(logits[i]);
  return w;
}

void HyperParams::validate() const {
  if (!(alpha > 0) || !std::isfinite(alpha)) throw domain_error("hyperparams: alpha must be positive");
  if (!(lambda > 0) || !std::isfinite(lambda)) throw domain_error("hyperparams: lambda must be positive");
  if (!(charbonnier_eps > 0)) throw domain_error("hyperparams: charbonnier_eps must be positive");
  if (!(angle_eps > 0)) throw domain_error("hyperparams: angle_eps must be positive");
}

bool pixel_in_image(const Pixel& u, const CameraIntrinsics& k) {
  return std::isfinite(u.x) && std::isfinite(u.y) && u.x >= 0 && u.y >= 0 && u.x <= k.width - 1 &&
         u.y <= k.height - 1;
}

void Problem::validate() const {
  if (views.size() < 2) throw validation_error("problem: at least two views are required");
  hyper.validate();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const View& view = views[v];
    try {
      view.intrinsics.validate();
    } catch (const Error& e) {
      throw validation_error("view " + std::to_string(v) + ": " + e.what());
    }
    const DepthMap& d = view.pseudo_depth;
    if (d.width != view.intrinsics.width || d.height != view.intrinsics.height ||
        d.values.size() != std::size_t(d.width) * d.height)
      throw validation_error("view " + std::to_string(v) + ": pseudo depth shape does not match intrinsics");
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      if (!(d.values[i] > 0) || !std::isfinite(d.values[i]))
        throw validation_error("view " + std::to_string(v) + ": pseudo depth must be positive and finite (pixel " +
                               std::to_string(i) + ")");
    }
  }
  for (std::size_t s = 0; s < correspondences.size(); ++s) {
    const CorrespondenceSet& set = correspondences[s];
    const int n = int(views.size());
    if (set.view_i < 0 || set.view_i >= n || set.view_j < 0 || set.view_j >= n)
      throw validation_error("correspondence set " + std::to_string(s) + ": view index out of range");
    if (set.view_i == set.view_j)
      throw validation_error("correspondence set " + std::to_string(s) + ": view_i equals view_j");
    const CameraIntrinsics& ki = views[set.view_i].intrinsics;
    const CameraIntrinsics& kj = views[set.view_j].intrinsics;
    for (std::size_t k = 0; k < set.pairs.size(); ++k) {
      if (!pixel_in_image(set.pairs[k].ui, ki) || !pixel_in_image(set.pairs[k].uj, kj))
        throw validation_error("correspondence set " + std::to_string(s) + ": match " + std::to_string(k) +
                               " lies outside the image");
    }
  }
}

bool Problem::pair_graph_connected() const {
  const std::size_t n = views.size();
  if (n == 0) return false;
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const CorrespondenceSet& set : correspondences) {
    if (set.pairs.empty()) continue;
    parent[find(std::size_t(set.view_i))] = find(std::size_t(set.view_j));
  }
  const std::size_t root = find(0);
  for (std::size_t i = 1; i < n; ++i)
    if (find(i) != root) return false;
  return true;
}

void Problem::require_connected() const {
  if (!pair_graph_connected()) throw validation_error("problem: correspondence graph is disconnected");
}

ParamLayout::ParamLayout(const Problem& problem, int grid_size) : grid_size_(grid_size) {
  if (grid_size < 1) throw domain_error("grid size must be >= 1");
  std::size_t offset = 0;
  for (const View& view : problem.views) {
    ViewBlock b;
    b.pose = offset;
    b.log_scale = b.pose + 6;
    b.residual = b.log_scale + 1;
    b.logits = b.residual + std::size_t(grid_size) * grid_size;
    b.end = b.logits + view.pseudo_depth.size();
    offset = b.end;
    blocks_.push_back(b);
  }
  size_ = offset;
}

void SceneState::retract(const ParamLayout& layout, const Eigen::VectorXd& delta) {
  for (std::size_t v = 0; v < views.size(); ++v) {
    const ViewBlock& b = layout.view(v);
    ViewParams& p = views[v];
    const Vec3 d_omega = delta.segment<3>(Eigen::Index(b.pose));
    const Vec3 d_trans = delta.segment<3>(Eigen::Index(b.pose + 3));
    if (d_omega.squaredNorm() > 0) p.pose.rotation = so3_exp(d_omega) * p.pose.rotation;
    p.pose.translation += d_trans;
    p.log_scale += delta[Eigen::Index(b.log_scale)];
    for (std::size_t g = 0; g < p.residual.size(); ++g) p.residual[g] += delta[Eigen::Index(b.residual + g)];
    for (std::size_t i = 0; i < p.confidence.logits.size(); ++i)
      p.confidence.logits[i] += delta[Eigen::Index(b.logits + i)];
  }
}

void SceneState::apply_gauge_fix() {
  if (views.empty()) return;
  views[0].pose = PoseSE3::identity();
  views[0].log_scale = 0.0;
}

SceneState init_state(const Problem& problem, int grid_size) {
  if (grid_size < 1) throw domain_error("grid size must be >= 1");
  SceneState state;
  state.grid_size = grid_size;
  for (const View& view : problem.views) {
    ViewParams p;
    p.residual.assign(std::size_t(grid_size) * grid_size, 0.0);
    p.confidence = ConfidenceMap(view.pseudo_depth.width, view.pseudo_depth.height);
    state.views.push_back(std::move(p));
  }
  return state;
}

void project_gauge(const ParamLayout& layout, Eigen::VectorXd& gradient) {
  if (layout.view_count() == 0) return;
  const ViewBlock& b = layout.view(0);
  gradient.segment<6>(Eigen::Index(b.pose)).setZero();
  gradient[Eigen::Index(b.log_scale)] = 0.0;
  // A constant residual grid is a second log-scale. Keeping grids zero-mean
  // leaves c_i as the only scale, which closes the gap in view 0's anchor.
  for (std::size_t v = 0; v < layout.view_count(); ++v) {
    const ViewBlock& bv = layout.view(v);
    auto grid = gradient.segment(Eigen::Index(bv.residual), Eigen::Index(bv.logits - bv.residual));
    grid.array() -= grid.mean();
  }
}

}  // namespace relieve
