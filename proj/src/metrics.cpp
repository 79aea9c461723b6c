#include "relieve/metrics.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "relieve/error.hpp"
#include "relieve/losses.hpp"
#include "relieve/robust_stats.hpp"

namespace relieve {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::vector<Vec3> centers_of(std::span<const PoseSE3> poses) {
  std::vector<Vec3> c;
  c.reserve(poses.size());
  for (const PoseSE3& p : poses) c.push_back(p.translation);
  return c;
}

}  // namespace

Sim3 umeyama_align(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.size() != target.size()) throw domain_error("umeyama_align: point count mismatch");
  if (source.size() < 3) throw domain_error("umeyama_align: at least three point pairs are required");
  const double n = double(source.size());
  Vec3 mu_x = Vec3::Zero();
  Vec3 mu_y = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    mu_x += source[i];
    mu_y += target[i];
  }
  mu_x /= n;
  mu_y /= n;
  Mat3 cov = Mat3::Zero();
  double var_x = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3 dx = source[i] - mu_x;
    cov += (target[i] - mu_y) * dx.transpose();
    var_x += dx.squaredNorm();
  }
  cov /= n;
  var_x /= n;

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (!(var_x > 0) || !(d[0] > 0) || d[1] <= 1e-12 * d[0])
    throw domain_error("umeyama_align: degenerate (collinear or coincident) configuration");
  Vec3 s(1.0, 1.0, 1.0);
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s[2] = -1.0;

  Sim3 out;
  out.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  out.scale = d.dot(s) / var_x;
  out.translation = mu_y - out.scale * (out.rotation * mu_x);
  return out;
}

double ate(std::span<const PoseSE3> est, std::span<const PoseSE3> gt) {
  if (est.size() != gt.size()) throw domain_error("ate: pose count mismatch");
  if (est.size() < 3) throw domain_error("ate: at least three views are required");
  const std::vector<Vec3> x = centers_of(est);
  const std::vector<Vec3> y = centers_of(gt);
  const Sim3 align = umeyama_align(x, y);
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& c : y) centroid += c;
  centroid /= double(y.size());
  double err = 0.0;
  double spread = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    err += (align * x[i] - y[i]).squaredNorm();
    spread += (y[i] - centroid).squaredNorm();
  }
  if (!(spread > 0)) throw domain_error("ate: ground-truth centers coincide");
  return std::sqrt(err / spread);
}

std::vector<double> pose_pair_errors(std::span<const PoseSE3> est, std::span<const PoseSE3> gt) {
  if (est.size() != gt.size()) throw domain_error("pose_auc: pose count mismatch");
  if (est.size() < 2) throw domain_error("pose_auc: at least two views are required");
  std::vector<double> errors;
  for (std::size_t i = 0; i < est.size(); ++i)
    for (std::size_t j = i + 1; j < est.size(); ++j) {
      const PoseSE3 rel_est = est[i].inverse() * est[j];
      const PoseSE3 rel_gt = gt[i].inverse() * gt[j];
      const double rot = rotation_angle(rel_est.rotation.transpose() * rel_gt.rotation) * kRadToDeg;
      const double n_est = rel_est.translation.norm();
      const double n_gt = rel_gt.translation.norm();
      double trans;
      if (n_gt <= 1e-9)
        trans = n_est <= 1e-9 ? 0.0 : 90.0;
      else if (n_est <= 1e-9)
        trans = 90.0;
      else
        trans = vector_angle(rel_est.translation, rel_gt.translation) * kRadToDeg;
      errors.push_back(std::max(rot, trans));
    }
  return errors;
}

double auc_from_errors(std::span<const double> errors_deg, double threshold_deg) {
  if (errors_deg.empty()) throw domain_error("auc: no errors");
  if (!(threshold_deg > 0)) throw domain_error("auc: threshold must be positive");
  std::vector<double> sorted(errors_deg.begin(), errors_deg.end());
  std::sort(sorted.begin(), sorted.end());
  // The accuracy curve steps up by 1/N at each sorted error; accumulate the
  // area of each constant piece up to the threshold.
  const double n = double(sorted.size());
  double area = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double from = std::max(sorted[k], 0.0);
    if (from >= threshold_deg) break;
    const double to = k + 1 < sorted.size() ? std::min(sorted[k + 1], threshold_deg) : threshold_deg;
    area += double(k + 1) / n * (to - from);
  }
  return 100.0 * area / threshold_deg;
}

double pose_auc(std::span<const PoseSE3> est, std::span<const PoseSE3> gt, double threshold_deg) {
  return auc_from_errors(pose_pair_errors(est, gt), threshold_deg);
}

double mean_rotation_error(std::span<const PoseSE3> est, std::span<const PoseSE3> gt) {
  if (est.size() != gt.size() || est.size() < 2) throw domain_error("rotation error: need matching poses, >= 2 views");
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < est.size(); ++i)
    for (std::size_t j = i + 1; j < est.size(); ++j) {
      const Mat3 r_est = est[i].rotation.transpose() * est[j].rotation;
      const Mat3 r_gt = gt[i].rotation.transpose() * gt[j].rotation;
      sum += rotation_angle(r_est.transpose() * r_gt) * kRadToDeg;
      ++count;
    }
  return sum / count;
}

RelTau depth_rel_tau(std::span<const DepthMap> est, std::span<const DepthMap> gt) {
  if (est.size() != gt.size() || est.empty()) throw domain_error("depth_rel_tau: view count mismatch");
  std::vector<double> ratio;
  for (std::size_t v = 0; v < est.size(); ++v) {
    if (est[v].width != gt[v].width || est[v].height != gt[v].height || est[v].size() != gt[v].size())
      throw domain_error("depth_rel_tau: shape mismatch");
    for (std::size_t i = 0; i < est[v].size(); ++i) {
      if (!(gt[v].values[i] > 0) || !(est[v].values[i] > 0))
        throw domain_error("depth_rel_tau: depths must be positive");
      ratio.push_back(gt[v].values[i] / est[v].values[i]);
    }
  }
  const std::vector<double> uniform(ratio.size(), 1.0);
  const double m = weighted_median(ratio, uniform);
  double rel = 0.0;
  std::size_t inliers = 0;
  for (std::size_t v = 0; v < est.size(); ++v)
    for (std::size_t i = 0; i < est[v].size(); ++i) {
      const double e = std::abs(m * est[v].values[i] - gt[v].values[i]) / gt[v].values[i];
      rel += e;
      if (e < kInlierThreshold) ++inliers;
    }
  return {rel / double(ratio.size()), double(inliers) / double(ratio.size())};
}

RelTau pointmap_rel_tau_aligned(std::span<const PointMap> est, std::span<const PointMap> gt,
                                std::span<const Vec3> gt_centers, const Sim3& align) {
  if (est.size() != gt.size() || gt_centers.size() != gt.size() || est.empty())
    throw domain_error("pointmap_rel_tau: view count mismatch");
  double rel = 0.0;
  std::size_t count = 0;
  std::size_t inliers = 0;
  for (std::size_t v = 0; v < est.size(); ++v) {
    if (est[v].size() != gt[v].size()) throw domain_error("pointmap_rel_tau: shape mismatch");
    for (std::size_t i = 0; i < est[v].size(); ++i) {
      const double dist = (gt[v][i] - gt_centers[v]).norm();
      if (!(dist > 0)) throw domain_error("pointmap_rel_tau: point coincides with its camera center");
      const double e = (align * est[v][i] - gt[v][i]).norm() / dist;
      rel += e;
      if (e < kInlierThreshold) ++inliers;
      ++count;
    }
  }
  return {rel / double(count), double(inliers) / double(count)};
}

Sim3 pointmap_alignment(std::span<const PointMap> est, std::span<const PointMap> gt, std::size_t max_samples,
                        std::uint64_t seed) {
  if (est.size() != gt.size()) throw domain_error("pointmap_rel_tau: view count mismatch");
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (std::size_t v = 0; v < est.size(); ++v) {
    if (est[v].size() != gt[v].size()) throw domain_error("pointmap_rel_tau: shape mismatch");
    src.insert(src.end(), est[v].begin(), est[v].end());
    dst.insert(dst.end(), gt[v].begin(), gt[v].end());
  }
  if (max_samples == 0 || src.size() <= max_samples) return umeyama_align(src, dst);
  // Partial Fisher-Yates on an index permutation, then restore index order.
  std::vector<std::size_t> idx(src.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < max_samples; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  idx.resize(max_samples);
  std::sort(idx.begin(), idx.end());
  std::vector<Vec3> s;
  std::vector<Vec3> d;
  for (std::size_t k : idx) {
    s.push_back(src[k]);
    d.push_back(dst[k]);
  }
  return umeyama_align(s, d);
}

RelTau pointmap_rel_tau(std::span<const PointMap> est, std::span<const PointMap> gt, std::span<const Vec3> gt_centers,
                        std::size_t max_samples, std::uint64_t seed) {
  return pointmap_rel_tau_aligned(est, gt, gt_centers, pointmap_alignment(est, gt, max_samples, seed));
}

PointMap depth_to_points(const DepthMap& depth, const CameraIntrinsics& k, const PoseSE3& pose) {
  PointMap points(depth.size());
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x)
      points[std::size_t(y) * depth.width + x] = to_world(backproject({double(x), double(y)}, depth.at(x, y), k), pose);
  return points;
}

EvalReport evaluate(const Solution& solution, const GroundTruthScene& truth) {
  const std::size_t n = truth.view_count();
  if (solution.poses.size() != n || solution.depths.size() != n || solution.point_maps.size() != n)
    throw validation_error("evaluate: solution and ground truth have different view counts");

  std::vector<PointMap> gt_points;
  std::vector<Vec3> gt_centers;
  for (std::size_t v = 0; v < n; ++v) {
    gt_points.push_back(depth_to_points(truth.depths[v], truth.intrinsics[v], truth.poses[v]));
    gt_centers.push_back(truth.poses[v].translation);
  }

  EvalReport r;
  const RelTau depth = depth_rel_tau(solution.depths, truth.depths);
  const Sim3 point_align = pointmap_alignment(solution.point_maps, gt_points, 10000, 0);
  const RelTau points = pointmap_rel_tau_aligned(solution.point_maps, gt_points, gt_centers, point_align);
  r.depth_rel = depth.rel;
  r.depth_tau = depth.tau;
  r.point_rel = points.rel;
  r.point_tau = points.tau;
  r.auc30 = pose_auc(solution.poses, truth.poses);
  r.mean_rotation_error_deg = mean_rotation_error(solution.poses, truth.poses);

  const std::vector<Vec3> est_centers = centers_of(solution.poses);
  Sim3 center_align;
  double spread = 0.0;
  if (n >= 3) {
    r.ate = ate(solution.poses, truth.poses);
    center_align = umeyama_align(est_centers, gt_centers);
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& c : gt_centers) centroid += c;
    centroid /= double(n);
    for (const Vec3& c : gt_centers) spread += (c - centroid).squaredNorm();
    spread = std::sqrt(spread / double(n));
  }

  // Per-view numbers reuse the scene-wide depth scale and point alignment.
  std::vector<double> ratio;
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t i = 0; i < truth.depths[v].size(); ++i)
      ratio.push_back(truth.depths[v].values[i] / solution.depths[v].values[i]);
  const double m = weighted_median(ratio, std::vector<double>(ratio.size(), 1.0));
  for (std::size_t v = 0; v < n; ++v) {
    ViewMetrics vm;
    const DepthMap& est = solution.depths[v];
    const DepthMap& gt = truth.depths[v];
    double rel = 0.0;
    std::size_t in = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const double e = std::abs(m * est.values[i] - gt.values[i]) / gt.values[i];
      rel += e;
      if (e < kInlierThreshold) ++in;
    }
    vm.depth_rel = rel / double(gt.size());
    vm.depth_tau = double(in) / double(gt.size());
    const RelTau pv = pointmap_rel_tau_aligned(std::span(&solution.point_maps[v], 1), std::span(&gt_points[v], 1),
                                               std::span(&gt_centers[v], 1), point_align);
    vm.point_rel = pv.rel;
    vm.point_tau = pv.tau;
    if (n >= 3 && spread > 0) vm.center_error = (center_align * est_centers[v] - gt_centers[v]).norm() / spread;
    r.views.push_back(vm);
  }
  return r;
}

}  // namespace relieve
