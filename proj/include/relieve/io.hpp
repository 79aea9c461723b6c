#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "relieve/optimizer.hpp"
#include "relieve/problem.hpp"
#include "relieve/scene_sim.hpp"

namespace relieve {

namespace fs = std::filesystem;

inline constexpr const char* kProblemVersion = "relieve-problem/1";
inline constexpr const char* kGroundTruthVersion = "relieve-ground-truth/1";
inline constexpr const char* kSolutionVersion = "relieve-solution/1";

/// Float raster as stored in a PFM file, rows top-down in memory.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;
};

/// Little-endian PFM ("Pf" or "PF", negative scale), rows written bottom-up.
void write_pfm(const fs::path& path, const Raster& raster);
/// Reads either byte order; data comes back top-down.
Raster read_pfm(const fs::path& path);

/// Depth-like maps are stored single channel. Values are cast to float.
void write_depth_pfm(const fs::path& path, const DepthMap& map);
DepthMap read_depth_pfm(const fs::path& path);

void write_points_pfm(const fs::path& path, const PointMap& points, int width, int height);
PointMap read_points_pfm(const fs::path& path, int& width, int& height);

/// CSV with header `ui_x,ui_y,uj_x,uj_y`, coordinates printed with 17
/// significant digits.
void write_matches_csv(const fs::path& path, const std::vector<Correspondence>& pairs);
std::vector<Correspondence> read_matches_csv(const fs::path& path);

/// Directory with problem.json, one PFM per view and one CSV per pair.
void save_problem(const Problem& problem, const fs::path& dir);
/// Fully validated problem, including a connected pair graph. Errors name the
/// offending file and field or pixel.
Problem load_problem(const fs::path& dir);

/// ground_truth.json plus exact depths and the TUM trajectory.
void save_ground_truth(const GroundTruthScene& scene, const fs::path& dir);
/// Accepts the ground-truth directory itself or a directory containing a
/// `ground_truth` subdirectory. Primitive lists are not stored.
GroundTruthScene load_ground_truth(const fs::path& dir);

/// TUM rows: index tx ty tz qx qy qz qw, 17 significant digits, qw >= 0.
void write_trajectory(const fs::path& path, const std::vector<PoseSE3>& poses);
std::vector<PoseSE3> read_trajectory(const fs::path& path);

struct SolutionBundle {
  Solution solution;
  OptimConfig config;
};

/// Writes trajectory.txt, depth/confidence/points PFMs per view,
/// loss_history.csv, state.json (full double state) and run.json.
/// Identical inputs give byte-identical files.
void save_solution(const Solution& solution, const OptimConfig& config, const fs::path& dir);
/// Poses and state come from state.json at full precision; rasters are the
/// stored float32 values.
SolutionBundle load_solution(const fs::path& dir);

/// Binary little-endian PLY with one float xyz vertex per pixel whose
/// confidence is at least `confidence_floor`. Returns the vertex count.
std::size_t export_ply(const std::vector<PointMap>& points, const std::vector<DepthMap>& confidences,
                       const fs::path& path, double confidence_floor = 0.5);

}  // namespace relieve
