#include "relieve/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "relieve/error.hpp"
#include "relieve/losses.hpp"

namespace relieve {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kLayoutRetries = 64;

std::uint64_t mix_seed(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b + 0x632be59bd9b4e019ULL));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Mat3 look_at(const Vec3& eye, const Vec3& target) {
  // Camera axes: x right, y down, z forward; world y is up.
  const Vec3 forward = (target - eye).normalized();
  const Vec3 down_hint(0.0, -1.0, 0.0);
  const Vec3 right = down_hint.cross(forward).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return r;
}

bool inside_room(const Enclosure& room, const Vec3& p) {
  return (p.array() > room.min.array()).all() && (p.array() < room.max.array()).all();
}

}  // namespace

RayHit cast_ray(const GroundTruthScene& scene, const PoseSE3& pose, const CameraIntrinsics& k, const Pixel& u) {
  const Vec3 origin = pose.translation;
  // The ray parameter equals camera z because the camera-frame ray has z = 1.
  const Vec3 dir = pose.rotation * pixel_ray(u, k);
  RayHit best;
  best.depth = std::numeric_limits<double>::infinity();
  constexpr double kMinDepth = 1e-9;

  int id = 0;
  for (const Panel& p : scene.panels) {
    const double denom = p.normal.dot(dir);
    if (std::abs(denom) > 1e-12) {
      const double lambda = p.normal.dot(p.center - origin) / denom;
      if (lambda > kMinDepth && lambda < best.depth) {
        const Vec3 local = origin + lambda * dir - p.center;
        if (std::abs(local.dot(p.axis_u)) <= p.half_u && std::abs(local.dot(p.axis_v)) <= p.half_v)
          best = {lambda, id, PrimitiveKind::Panel};
      }
    }
    ++id;
  }
  for (const Sphere& s : scene.spheres) {
    const Vec3 oc = origin - s.center;
    const double a = dir.squaredNorm();
    const double b = 2.0 * oc.dot(dir);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      // Numerically stable root pair.
      const double q = -0.5 * (b + std::copysign(sq, b));
      double r0 = q / a;
      double r1 = q != 0 ? c / q : r0;
      if (r0 > r1) std::swap(r0, r1);
      const double lambda = r0 > kMinDepth ? r0 : r1;
      if (lambda > kMinDepth && lambda < best.depth) best = {lambda, id, PrimitiveKind::Sphere};
    }
    ++id;
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] > 0) {
      const double lambda = (scene.room.max[axis] - origin[axis]) / dir[axis];
      if (lambda > kMinDepth && lambda < best.depth) best = {lambda, id + 2 * axis + 1, PrimitiveKind::Wall};
    } else if (dir[axis] < 0) {
      const double lambda = (scene.room.min[axis] - origin[axis]) / dir[axis];
      if (lambda > kMinDepth && lambda < best.depth) best = {lambda, id + 2 * axis, PrimitiveKind::Wall};
    }
  }
  return best;
}

RayHit GroundTruthScene::cast(std::size_t view, const Pixel& u) const {
  return cast_ray(*this, poses[view], intrinsics[view], u);
}

GroundTruthScene generate_scene(int view_count, int width, int height, std::uint64_t seed) {
  if (view_count < 2) throw domain_error("generate_scene: at least two views are required");
  if (width < 2 || height < 2) throw domain_error("generate_scene: resolution must be at least 2x2");
  std::mt19937_64 rng(derive_seed(seed, 0x5ce7e));

  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = k.fy = 0.9 * width;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);

  for (int attempt = 0; attempt < kLayoutRetries; ++attempt) {
    GroundTruthScene scene;
    scene.room = {Vec3(-7.0, -4.0, -7.0), Vec3(7.0, 4.0, 7.0)};

    const int n_panels = std::uniform_int_distribution<int>(3, 6)(rng);
    for (int i = 0; i < n_panels; ++i) {
      Panel p;
      p.center = Vec3(uniform(rng, -2, 2), uniform(rng, -1.5, 1.5), uniform(rng, -2, 2));
      p.normal = random_unit(rng);
      const Vec3 helper = std::abs(p.normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
      p.axis_u = p.normal.cross(helper).normalized();
      p.axis_v = p.normal.cross(p.axis_u);
      p.half_u = uniform(rng, 0.4, 1.0);
      p.half_v = uniform(rng, 0.4, 1.0);
      scene.panels.push_back(p);
    }
    const int n_spheres = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int i = 0; i < n_spheres; ++i)
      scene.spheres.push_back({Vec3(uniform(rng, -2, 2), uniform(rng, -1.5, 1.5), uniform(rng, -2, 2)),
                               uniform(rng, 0.3, 0.7)});

    // Inward-looking arc around the object cluster.
    const Vec3 target(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));
    const double radius = uniform(rng, 4.0, 5.0);
    const double start = uniform(rng, -20.0, 20.0) * kDeg;
    const double sweep = uniform(rng, 10.0, 30.0) * kDeg;
    const double height0 = uniform(rng, -0.5, 0.5);
    const double bob = uniform(rng, 0.0, 0.3);
    for (int v = 0; v < view_count; ++v) {
      const double s = double(v) / double(view_count - 1);
      const double phi = start + sweep * s;
      const Vec3 eye = target + Vec3(radius * std::sin(phi), height0 + bob * std::sin(std::numbers::pi * s),
                                     radius * std::cos(phi));
      const Vec3 aim = target + Vec3(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2));
      scene.poses.push_back({look_at(eye, aim), eye});
      scene.intrinsics.push_back(k);
    }

    bool ok = true;
    for (const PoseSE3& pose : scene.poses) {
      if (!inside_room(scene.room, pose.translation)) ok = false;
      for (const Sphere& s : scene.spheres)
        if ((pose.translation - s.center).norm() < s.radius + 0.3) ok = false;
    }
    if (!ok) continue;

    for (std::size_t v = 0; ok && v < scene.poses.size(); ++v) {
      DepthMap depth(width, height);
      std::vector<int> ids(depth.size());
      for (int y = 0; y < height && ok; ++y)
        for (int x = 0; x < width; ++x) {
          const RayHit hit = scene.cast(v, {double(x), double(y)});
          if (!(hit.depth > 0.3) || !std::isfinite(hit.depth)) {
            ok = false;
            break;
          }
          depth.at(x, y) = hit.depth;
          ids[std::size_t(y) * width + x] = hit.primitive;
        }
      scene.depths.push_back(std::move(depth));
      scene.primitive_ids.push_back(std::move(ids));
    }
    if (!ok) continue;

    Vec3 centroid = Vec3::Zero();
    for (const PoseSE3& pose : scene.poses) centroid += pose.translation;
    centroid /= double(view_count);
    double spread = 0.0;
    for (const PoseSE3& pose : scene.poses) spread += (pose.translation - centroid).norm();
    scene.scene_scale = spread / double(view_count);
    return scene;
  }
  throw domain_error("generate_scene: no valid layout after " + std::to_string(kLayoutRetries) + " attempts");
}

void CorruptionConfig::validate() const {
  if (!(scale_min > 0) || !(scale_max >= scale_min)) throw domain_error("corruption: invalid scale range");
  if (!(field_amplitude >= 0 && field_amplitude <= 0.5)) throw domain_error("corruption: amplitude must be in [0, 0.5]");
  if (field_octaves < 1) throw domain_error("corruption: octaves must be >= 1");
  if (!(outlier_fraction >= 0 && outlier_fraction < 1)) throw domain_error("corruption: outlier fraction in [0, 1)");
}

CorruptedDepth corrupt_depth(const DepthMap& gt, const CorruptionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, 0xde9));
  CorruptedDepth out;
  const double lo = std::log(cfg.scale_min);
  out.scale = std::exp(lo + uniform(rng, 0.0, 1.0) * (std::log(cfg.scale_max) - lo));

  const int w = gt.width;
  const int h = gt.height;
  std::vector<double> field(gt.size(), 0.0);
  if (cfg.field_amplitude > 0) {
    double octave_amp = 1.0;
    for (int o = 0; o < cfg.field_octaves; ++o) {
      const int cells = 2 << o;  // 2, 4, 8, ... cells per axis
      const int nodes = cells + 1;
      std::vector<double> lattice(std::size_t(nodes) * nodes);
      for (double& v : lattice) v = uniform(rng, -1.0, 1.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double fx = double(x) / double(std::max(w - 1, 1)) * cells;
          const double fy = double(y) / double(std::max(h - 1, 1)) * cells;
          const int x0 = std::min(int(fx), cells - 1);
          const int y0 = std::min(int(fy), cells - 1);
          double tx = fx - x0;
          double ty = fy - y0;
          tx = tx * tx * (3 - 2 * tx);
          ty = ty * ty * (3 - 2 * ty);
          auto at = [&](int i, int j) { return lattice[std::size_t(j) * nodes + i]; };
          const double top = at(x0, y0) * (1 - tx) + at(x0 + 1, y0) * tx;
          const double bottom = at(x0, y0 + 1) * (1 - tx) + at(x0 + 1, y0 + 1) * tx;
          field[std::size_t(y) * w + x] += octave_amp * (top * (1 - ty) + bottom * ty);
        }
      octave_amp *= 0.5;
    }
    double peak = 0.0;
    for (double f : field) peak = std::max(peak, std::abs(f));
    if (peak > 0)
      for (double& f : field) f *= cfg.field_amplitude / peak;
  }

  std::vector<double> factor(gt.size(), 1.0);
  if (cfg.outlier_fraction > 0) {
    const std::size_t target = std::size_t(std::ceil(cfg.outlier_fraction * double(gt.size())));
    std::size_t covered = 0;
    while (covered < target) {
      const int rw = std::max(1, int(uniform(rng, w / 8.0, w / 4.0)));
      const int rh = std::max(1, int(uniform(rng, h / 8.0, h / 4.0)));
      const int x0 = std::uniform_int_distribution<int>(0, w - rw)(rng);
      const int y0 = std::uniform_int_distribution<int>(0, h - rh)(rng);
      for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) {
          double& f = factor[std::size_t(y) * w + x];
          if (f == 1.0) {
            f = 3.0;
            ++covered;
          }
        }
    }
  }

  out.pseudo = DepthMap(w, h);
  for (std::size_t i = 0; i < gt.size(); ++i)
    out.pseudo.values[i] = double(float(gt.values[i] * out.scale * std::exp(field[i]) * factor[i]));
  return out;
}

void MatchNoiseConfig::validate() const {
  if (!(pixel_sigma >= 0)) throw domain_error("matches: sigma must be >= 0");
  if (!(outlier_rate >= 0 && outlier_rate < 1)) throw domain_error("matches: outlier rate must be in [0, 1)");
  if (matches_per_pair < 0) throw domain_error("matches: count must be >= 0");
  if (max_pair_distance < 1) throw domain_error("matches: pair distance must be >= 1");
}

namespace {

bool support_on(const GroundTruthScene& scene, std::size_t view, const Pixel& u, int primitive) {
  const CameraIntrinsics& k = scene.intrinsics[view];
  const DepthTap tap = depth_tap(u, k.width, k.height);
  for (int m = 0; m < 4; ++m)
    if (scene.primitive_ids[view][tap.pixel[m]] != primitive) return false;
  return true;
}

}  // namespace

CorrespondenceSet sample_correspondences(const GroundTruthScene& scene, int view_i, int view_j,
                                         const MatchNoiseConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n = int(scene.view_count());
  if (view_i < 0 || view_i >= n || view_j < 0 || view_j >= n || view_i == view_j)
    throw domain_error("sample_correspondences: invalid view pair");
  std::mt19937_64 rng(derive_seed(seed, std::uint64_t(view_i), std::uint64_t(view_j)));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution outlier(cfg.outlier_rate);

  const std::size_t vi = std::size_t(view_i);
  const std::size_t vj = std::size_t(view_j);
  const CameraIntrinsics& ki = scene.intrinsics[vi];
  const CameraIntrinsics& kj = scene.intrinsics[vj];
  const PoseSE3 world_to_j = scene.poses[vj].inverse();

  CorrespondenceSet set;
  set.view_i = view_i;
  set.view_j = view_j;
  const long max_attempts = 200L * std::max(cfg.matches_per_pair, 1);
  for (long attempt = 0; attempt < max_attempts && int(set.pairs.size()) < cfg.matches_per_pair; ++attempt) {
    const Pixel ui{uniform(rng, 0.0, ki.width - 1.0), uniform(rng, 0.0, ki.height - 1.0)};
    const RayHit hit_i = scene.cast(vi, ui);
    if (!hit_i.planar() || !support_on(scene, vi, ui, hit_i.primitive)) continue;
    const Vec3 world = to_world(backproject(ui, hit_i.depth, ki), scene.poses[vi]);
    const Vec3 in_j = world_to_j * world;
    if (!(in_j.z() > 1e-6)) continue;
    Pixel uj = project(in_j, kj);
    if (!pixel_in_image(uj, kj)) continue;
    const RayHit hit_j = scene.cast(vj, uj);
    if (hit_j.primitive != hit_i.primitive || std::abs(hit_j.depth - in_j.z()) > 0.01 * in_j.z()) continue;
    if (!support_on(scene, vj, uj, hit_i.primitive)) continue;

    if (cfg.pixel_sigma > 0) {
      bool placed = false;
      for (int tries = 0; tries < 16 && !placed; ++tries) {
        const Pixel cand{uj.x + cfg.pixel_sigma * noise(rng), uj.y + cfg.pixel_sigma * noise(rng)};
        if (pixel_in_image(cand, kj)) {
          uj = cand;
          placed = true;
        }
      }
      if (!placed) continue;
    }
    if (cfg.outlier_rate > 0 && outlier(rng))
      uj = {uniform(rng, 0.0, kj.width - 1.0), uniform(rng, 0.0, kj.height - 1.0)};
    set.pairs.push_back({ui, uj});
  }
  set.partial = int(set.pairs.size()) < cfg.matches_per_pair;
  return set;
}

SimulatedProblem build_problem(const GroundTruthScene& scene, const CorruptionConfig& corruption,
                               const MatchNoiseConfig& matches, std::uint64_t seed) {
  corruption.validate();
  matches.validate();
  SimulatedProblem sim;
  sim.scene = scene;
  for (std::size_t v = 0; v < scene.view_count(); ++v) {
    CorruptedDepth c = corrupt_depth(scene.depths[v], corruption, derive_seed(seed, 0xc0, v));
    sim.problem.views.push_back({scene.intrinsics[v], std::move(c.pseudo)});
    sim.view_scales.push_back(c.scale);
  }
  const int n = int(scene.view_count());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n && j - i <= matches.max_pair_distance; ++j)
      sim.problem.correspondences.push_back(sample_correspondences(scene, i, j, matches, derive_seed(seed, 0x3a7c)));
  return sim;
}

SimulatedProblem simulate(int view_count, int width, int height, const CorruptionConfig& corruption,
                          const MatchNoiseConfig& matches, std::uint64_t seed) {
  return build_problem(generate_scene(view_count, width, height, seed), corruption, matches, seed);
}

SceneState ground_truth_state(const SimulatedProblem& sim, int grid_size) {
  SceneState state = init_state(sim.problem, grid_size);
  const PoseSE3 anchor_inv = sim.scene.poses[0].inverse();
  const double s0 = sim.view_scales[0];
  for (std::size_t v = 0; v < state.views.size(); ++v) {
    PoseSE3 rel = anchor_inv * sim.scene.poses[v];
    rel.translation *= s0;
    state.views[v].pose = rel;
    state.views[v].log_scale = std::log(s0 / sim.view_scales[v]);
  }
  state.views[0].pose = PoseSE3::identity();
  state.views[0].log_scale = 0.0;
  return state;
}

CheckInstance random_check_instance(std::uint64_t seed, int grid_size) {
  std::mt19937_64 rng(derive_seed(seed, 0x6c4));
  const int views = 2 + int(rng() % 3);
  MatchNoiseConfig matches;
  const int pairs = views == 2 ? 1 : 2 * views - 3;
  matches.matches_per_pair = std::max(1, 20 / pairs);
  CheckInstance out;
  out.problem = simulate(views, 8, 8, CorruptionConfig{}, matches, derive_seed(seed, 0x51)).problem;
  out.state = init_state(out.problem, grid_size);
  const ParamLayout layout(out.problem, grid_size);
  Eigen::VectorXd delta(Eigen::Index(layout.size()));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t v = 0; v < layout.view_count(); ++v) {
    const ViewBlock& b = layout.view(v);
    for (std::size_t i = b.pose; i < b.end; ++i) {
      double sigma = 0.5;  // logits
      if (i < b.log_scale) sigma = 0.05;
      else if (i == b.log_scale) sigma = 0.1;
      else if (i < b.logits) sigma = 0.05;
      delta[Eigen::Index(i)] = sigma * normal(rng);
    }
  }
  out.state.retract(layout, delta);
  out.state.apply_gauge_fix();
  return out;
}

}  // namespace relieve
