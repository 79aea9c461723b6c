#pragma once

#include <cstdint>
#include <vector>

#include "relieve/geometry.hpp"
#include "relieve/problem.hpp"
#include "relieve/types.hpp"

namespace relieve {

/// Finite rectangle: center + orthonormal in-plane axes with half extents.
struct Panel {
  Vec3 center;
  Vec3 normal;
  Vec3 axis_u;
  Vec3 axis_v;
  double half_u = 1.0;
  double half_v = 1.0;
};

struct Sphere {
  Vec3 center;
  double radius = 1.0;
};

/// Axis-aligned room that encloses cameras and objects; every ray ends on it.
struct Enclosure {
  Vec3 min;
  Vec3 max;
};

// Primitive ids: panels first, then spheres, then the six enclosure faces.
enum class PrimitiveKind { Panel, Sphere, Wall };

struct RayHit {
  double depth = 0.0;  // camera z of the hit point
  int primitive = -1;
  PrimitiveKind kind = PrimitiveKind::Wall;
  bool planar() const { return kind != PrimitiveKind::Sphere; }
};

struct GroundTruthScene {
  std::vector<CameraIntrinsics> intrinsics;
  std::vector<PoseSE3> poses;
  std::vector<DepthMap> depths;
  std::vector<std::vector<int>> primitive_ids;  // per view, per pixel
  std::vector<Panel> panels;
  std::vector<Sphere> spheres;
  Enclosure room;
  double scene_scale = 0.0;  // mean camera-center distance from their centroid

  std::size_t view_count() const { return poses.size(); }
  /// Exact hit of the ray through continuous pixel `u` of `view`.
  RayHit cast(std::size_t view, const Pixel& u) const;
};

/// Analytic ray cast against the scene primitives from a camera.
RayHit cast_ray(const GroundTruthScene& scene, const PoseSE3& pose, const CameraIntrinsics& k, const Pixel& u);

/// 3-6 panels and 1-3 spheres in a room, cameras on an inward-looking arc
/// sweeping 10-30 degrees. Deterministic in `seed`.
GroundTruthScene generate_scene(int view_count, int width, int height, std::uint64_t seed);

struct CorruptionConfig {
  double scale_min = 0.7;  // per-view scale, log-uniform
  double scale_max = 1.3;
  double field_amplitude = 0.1;  // max |log| of the smooth multiplicative field
  int field_octaves = 2;
  double outlier_fraction = 0.0;  // area covered by x3 rectangles

  void validate() const;
};

struct CorruptedDepth {
  DepthMap pseudo;
  double scale = 1.0;
};

/// gt * scale * exp(field), optionally with x3 outlier rectangles. Values are
/// rounded to float32 so they survive PFM storage unchanged.
CorruptedDepth corrupt_depth(const DepthMap& gt, const CorruptionConfig& cfg, std::uint64_t seed);

struct MatchNoiseConfig {
  double pixel_sigma = 0.5;
  double outlier_rate = 0.0;
  int matches_per_pair = 200;
  int max_pair_distance = 2;  // pairs (i, j) with 0 < j - i <= this

  void validate() const;
};

/// Matches between views i and j. Only points on planar surfaces whose
/// bilinear support is on the same surface in both views are emitted, and
/// only when visible in view j (depth test at 1%). Noise is added to u_j.
/// `partial` is set when fewer than the requested count could be found.
CorrespondenceSet sample_correspondences(const GroundTruthScene& scene, int view_i, int view_j,
                                         const MatchNoiseConfig& cfg, std::uint64_t seed);

struct SimulatedProblem {
  Problem problem;
  GroundTruthScene scene;
  std::vector<double> view_scales;
};

SimulatedProblem build_problem(const GroundTruthScene& scene, const CorruptionConfig& corruption,
                               const MatchNoiseConfig& matches, std::uint64_t seed);

/// generate_scene + build_problem.
SimulatedProblem simulate(int view_count, int width, int height, const CorruptionConfig& corruption,
                          const MatchNoiseConfig& matches, std::uint64_t seed);

/// The state that reproduces the ground truth in the anchored gauge: poses
/// relative to view 0, translations in view-0 pseudo units, log-scales that
/// undo the per-view scale corruption. Residual grids and logits are zero.
SceneState ground_truth_state(const SimulatedProblem& sim, int grid_size);

/// Small random problem with a perturbed state, for gradient checks: 2-4
/// views of 8x8 pixels, at most 20 matches in total.
struct CheckInstance {
  Problem problem;
  SceneState state;
};

CheckInstance random_check_instance(std::uint64_t seed, int grid_size = 4);

}  // namespace relieve
