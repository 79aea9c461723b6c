#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "relieve/geometry.hpp"
#include "relieve/optimizer.hpp"
#include "relieve/scene_sim.hpp"
#include "relieve/types.hpp"

namespace relieve {

/// x -> scale * rotation * x + translation
struct Sim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 operator*(const Vec3& x) const { return scale * (rotation * x) + translation; }
  PoseSE3 apply(const PoseSE3& pose) const {
    return {rotation * pose.rotation, scale * (rotation * pose.translation) + translation};
  }
};

/// Closed-form least-squares similarity taking `source` onto `target`
/// (centered cross-covariance SVD with reflection guard). Throws on fewer than
/// three pairs or a rank-deficient (collinear) configuration.
Sim3 umeyama_align(std::span<const Vec3> source, std::span<const Vec3> target);

/// RMSE of Sim(3)-aligned camera centers divided by the RMS spread of the
/// ground-truth centers about their centroid. Needs >= 3 views.
double ate(std::span<const PoseSE3> est, std::span<const PoseSE3> gt);

/// For every unordered view pair: max of the relative-rotation angle error
/// and the relative-translation direction error, in degrees.
std::vector<double> pose_pair_errors(std::span<const PoseSE3> est, std::span<const PoseSE3> gt);

/// Area under the cumulative accuracy curve on [0, threshold], as a
/// percentage of the ideal area.
double auc_from_errors(std::span<const double> errors_deg, double threshold_deg);

double pose_auc(std::span<const PoseSE3> est, std::span<const PoseSE3> gt, double threshold_deg = 30.0);

struct RelTau {
  double rel = 0.0;
  double tau = 0.0;
};

inline constexpr double kInlierThreshold = 0.1;

/// One median scale for all pixels of all views, then mean relative error and
/// the fraction below 10%.
RelTau depth_rel_tau(std::span<const DepthMap> est, std::span<const DepthMap> gt);

/// Per-point error ||align(est) - gt|| over the GT distance to the GT camera
/// center of the point's view, for a given alignment.
RelTau pointmap_rel_tau_aligned(std::span<const PointMap> est, std::span<const PointMap> gt,
                                std::span<const Vec3> gt_centers, const Sim3& align);

/// Sim(3) taking all estimated points onto GT, fitted on a uniform seeded
/// subsample of at most `max_samples` points (0 = use all).
Sim3 pointmap_alignment(std::span<const PointMap> est, std::span<const PointMap> gt, std::size_t max_samples,
                        std::uint64_t seed);

/// Sim(3) alignment from a uniform subsample of at most `max_samples`
/// points (seeded), then pointmap_rel_tau_aligned over all points.
RelTau pointmap_rel_tau(std::span<const PointMap> est, std::span<const PointMap> gt, std::span<const Vec3> gt_centers,
                        std::size_t max_samples = 10000, std::uint64_t seed = 0);

struct ViewMetrics {
  double depth_rel = 0.0;
  double depth_tau = 0.0;
  double point_rel = 0.0;
  double point_tau = 0.0;
  double center_error = 0.0;  // aligned center error / GT spread
};

struct EvalReport {
  double point_rel = 0.0;
  double point_tau = 0.0;
  double depth_rel = 0.0;
  double depth_tau = 0.0;
  double ate = 0.0;
  double auc30 = 0.0;
  double mean_rotation_error_deg = 0.0;  // mean pairwise relative-rotation error
  std::vector<ViewMetrics> views;
};

/// World points of a depth map seen from `pose`.
PointMap depth_to_points(const DepthMap& depth, const CameraIntrinsics& k, const PoseSE3& pose);

/// Mean pairwise relative-rotation angle error in degrees.
double mean_rotation_error(std::span<const PoseSE3> est, std::span<const PoseSE3> gt);

/// Full report of a solution against ground truth (poses, depths, intrinsics).
EvalReport evaluate(const Solution& solution, const GroundTruthScene& truth);

}  // namespace relieve
