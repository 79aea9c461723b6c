#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "relieve/error.hpp"
#include "relieve/losses.hpp"
#include "relieve/robust_stats.hpp"
#include "relieve/scene_sim.hpp"

using namespace relieve;

namespace {

// Camera z of the hit with one primitive, solved in the camera frame.
// Returns infinity on a miss.
double oracle_depth_on(const GroundTruthScene& s, std::size_t view, const Pixel& u, int primitive) {
  const CameraIntrinsics& k = s.intrinsics[view];
  const Mat3 rt = s.poses[view].rotation.transpose();
  const Vec3 c = s.poses[view].translation;
  const Vec3 r((u.x - k.cx) / k.fx, (u.y - k.cy) / k.fy, 1.0);
  const double inf = std::numeric_limits<double>::infinity();
  const int panels = int(s.panels.size());
  const int spheres = int(s.spheres.size());
  if (primitive < panels) {
    const Panel& p = s.panels[std::size_t(primitive)];
    const double z = p.normal.dot(p.center - c) / (rt * p.normal).dot(r);
    return z > 0 ? z : inf;
  }
  if (primitive < panels + spheres) {
    const Sphere& sp = s.spheres[std::size_t(primitive - panels)];
    const Vec3 sc = rt * (sp.center - c);
    const double a = r.squaredNorm(), b = r.dot(sc), cc = sc.squaredNorm() - sp.radius * sp.radius;
    const double disc = b * b - a * cc;
    if (disc < 0) return inf;
    const double z = (b - std::sqrt(disc)) / a;
    return z > 0 ? z : inf;
  }
  const int face = primitive - panels - spheres;
  const int axis = face / 2;
  const double bound = face % 2 == 0 ? s.room.min[axis] : s.room.max[axis];
  Vec3 n = Vec3::Zero();
  n[axis] = 1.0;
  const double z = (bound - c[axis]) / (rt * n).dot(r);
  return z > 0 ? z : inf;
}

bool inside_panel(const Panel& p, const Vec3& x) {
  const Vec3 l = x - p.center;
  return std::abs(l.dot(p.axis_u)) <= p.half_u + 1e-9 && std::abs(l.dot(p.axis_v)) <= p.half_v + 1e-9;
}

// Nearest visible hit over every primitive, for occlusion checks.
double oracle_first_hit(const GroundTruthScene& s, std::size_t view, const Pixel& u) {
  const CameraIntrinsics& k = s.intrinsics[view];
  const Vec3 r((u.x - k.cx) / k.fx, (u.y - k.cy) / k.fy, 1.0);
  const int total = int(s.panels.size() + s.spheres.size()) + 6;
  double best = std::numeric_limits<double>::infinity();
  for (int id = 0; id < total; ++id) {
    const double z = oracle_depth_on(s, view, u, id);
    if (!std::isfinite(z)) continue;
    if (id < int(s.panels.size())) {
      const Vec3 world = s.poses[view].rotation * (z * r) + s.poses[view].translation;
      if (!inside_panel(s.panels[std::size_t(id)], world)) continue;
    }
    best = std::min(best, z);
  }
  return best;
}

Vec3 world_point(const GroundTruthScene& s, std::size_t view, const Pixel& u) {
  return to_world(backproject(u, s.cast(view, u).depth, s.intrinsics[view]), s.poses[view]);
}

}  // namespace

TEST_CASE("generate_scene is deterministic in its seed") {
  const GroundTruthScene a = generate_scene(5, 32, 24, 7);
  const GroundTruthScene b = generate_scene(5, 32, 24, 7);
  for (std::size_t v = 0; v < 5; ++v) {
    CHECK(a.depths[v] == b.depths[v]);
    CHECK(a.poses[v].rotation == b.poses[v].rotation);
    CHECK(a.poses[v].translation == b.poses[v].translation);
    CHECK(a.primitive_ids[v] == b.primitive_ids[v]);
  }
  CHECK(a.scene_scale == b.scene_scale);
  const GroundTruthScene c = generate_scene(5, 32, 24, 8);
  CHECK_FALSE(c.depths[0] == a.depths[0]);
}

TEST_CASE("rendered depths are positive and bounded by the room diagonal") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GroundTruthScene s = generate_scene(4, 32, 24, seed);
    const double diagonal = (s.room.max - s.room.min).norm();
    for (const DepthMap& d : s.depths)
      for (double z : d.values) {
        CHECK(z > 0.0);
        CHECK(z < diagonal);
      }
    CHECK(s.scene_scale > 0.0);
    for (const PoseSE3& p : s.poses) CHECK(p.is_valid(1e-12));
  }
}

TEST_CASE("rendered depth matches a closed-form ray-primitive solve on 100 pixels") {
  const GroundTruthScene s = generate_scene(6, 64, 48, 42);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> uv(0, 5), ux(0, 63), uy(0, 47);
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t v = std::size_t(uv(rng));
    const int x = ux(rng), y = uy(rng);
    const int id = s.primitive_ids[v][std::size_t(y) * 64 + x];
    const double expected = oracle_depth_on(s, v, {double(x), double(y)}, id);
    const double got = s.depths[v].at(x, y);
    CHECK(std::abs(got - expected) <= 1e-10 * expected);
    CHECK(std::abs(oracle_first_hit(s, v, {double(x), double(y)}) - got) <= 1e-10 * got);
  }
}

TEST_CASE("generate_scene errors") {
  CHECK_THROWS_AS(generate_scene(1, 32, 24, 0), Error);
}

TEST_CASE("corrupt_depth: no field and unit scale reproduces the truth at float precision") {
  const GroundTruthScene s = generate_scene(2, 32, 24, 3);
  CorruptionConfig cfg;
  cfg.field_amplitude = 0.0;
  cfg.scale_min = cfg.scale_max = 1.0;
  const CorruptedDepth c = corrupt_depth(s.depths[0], cfg, 5);
  CHECK(c.scale == 1.0);
  for (std::size_t i = 0; i < c.pseudo.size(); ++i)
    CHECK(c.pseudo.values[i] == double(float(s.depths[0].values[i])));
}

TEST_CASE("corrupt_depth: field amplitude bounds the log deviation") {
  const GroundTruthScene s = generate_scene(3, 48, 36, 4);
  const CorruptionConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const CorruptedDepth c = corrupt_depth(s.depths[seed % 3], cfg, seed);
    CHECK(c.scale >= cfg.scale_min);
    CHECK(c.scale <= cfg.scale_max);
    double worst = 0.0;
    for (std::size_t i = 0; i < c.pseudo.size(); ++i) {
      // Undo the float32 storage rounding before taking the log.
      const double exact = double(float(c.pseudo.values[i]));
      worst = std::max(worst, std::abs(std::log(exact / s.depths[seed % 3].values[i]) - std::log(c.scale)));
    }
    CHECK(worst <= cfg.field_amplitude + 1e-7);  // 1e-7 covers the float32 rounding
    CHECK(worst > 0.5 * cfg.field_amplitude);
  }
}

TEST_CASE("corrupt_depth: scale-only corruption leaves the normalized depth unchanged") {
  const GroundTruthScene s = generate_scene(2, 32, 24, 6);
  CorruptionConfig cfg;
  cfg.field_amplitude = 0.0;
  const CorruptedDepth c = corrupt_depth(s.depths[1], cfg, 9);
  const std::vector<double> w(s.depths[1].size(), 1.0);
  std::vector<double> scaled;
  for (std::size_t i = 0; i < s.depths[1].size(); ++i) {
    scaled.push_back(s.depths[1].values[i] * c.scale);
    CHECK(c.pseudo.values[i] == double(float(scaled.back())));
  }
  const std::vector<double> g_true = wmad_normalize(s.depths[1].values, w);
  const std::vector<double> g_scaled = wmad_normalize(scaled, w);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(g_true[i] - g_scaled[i]) < 1e-12);
}

TEST_CASE("corrupt_depth: outlier rectangles multiply depth by 3") {
  const GroundTruthScene s = generate_scene(2, 32, 24, 6);
  CorruptionConfig cfg;
  cfg.field_amplitude = 0.0;
  cfg.scale_min = cfg.scale_max = 1.0;
  cfg.outlier_fraction = 0.2;
  const CorruptedDepth c = corrupt_depth(s.depths[0], cfg, 1);
  std::size_t tripled = 0;
  for (std::size_t i = 0; i < c.pseudo.size(); ++i) {
    const double ratio = c.pseudo.values[i] / s.depths[0].values[i];
    const bool one = std::abs(ratio - 1.0) < 1e-6;
    const bool three = std::abs(ratio - 3.0) < 3e-6;
    CHECK((one || three));
    tripled += three;
  }
  CHECK(double(tripled) >= 0.2 * double(c.pseudo.size()));
}

TEST_CASE("corruption config validation") {
  CorruptionConfig cfg;
  cfg.field_amplitude = 0.6;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.scale_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  MatchNoiseConfig m;
  m.outlier_rate = 1.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m = {};
  m.pixel_sigma = -1;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("noise-free correspondences are exactly two-view consistent") {
  const GroundTruthScene s = generate_scene(4, 48, 36, 11);
  MatchNoiseConfig cfg;
  cfg.pixel_sigma = 0.0;
  cfg.matches_per_pair = 100;
  // Exact depths and exact poses: every angle term must vanish.
  Problem p;
  for (std::size_t v = 0; v < 4; ++v) p.views.push_back({s.intrinsics[v], s.depths[v]});
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4 && j - i <= 2; ++j) p.correspondences.push_back(sample_correspondences(s, i, j, cfg, 3));
  SceneState st = init_state(p, 2);
  for (std::size_t v = 0; v < 4; ++v) st.views[v].pose = s.poses[v];
  CHECK(registration_loss(st, p) < 1e-10);
  for (const CorrespondenceSet& set : p.correspondences)
    for (const Correspondence& m : set.pairs) {
      const Vec3 xi = world_point(s, std::size_t(set.view_i), m.ui);
      const Vec3 ci = s.poses[std::size_t(set.view_i)].translation;
      const Vec3 cj = s.poses[std::size_t(set.view_j)].translation;
      const PoseSE3 inv_j = s.poses[std::size_t(set.view_j)].inverse();
      const Pixel back = project(inv_j * xi, s.intrinsics[std::size_t(set.view_j)]);
      CHECK(std::abs(back.x - m.uj.x) < 1e-9);
      CHECK(std::abs(back.y - m.uj.y) < 1e-9);
      CHECK((xi - ci).norm() > 0);
      CHECK((xi - cj).norm() > 0);
    }
}

TEST_CASE("emitted matches are never occluded in view j") {
  MatchNoiseConfig cfg;
  cfg.pixel_sigma = 0.0;
  cfg.matches_per_pair = 150;
  for (std::uint64_t seed = 20; seed < 24; ++seed) {
    const GroundTruthScene s = generate_scene(5, 48, 36, seed);
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5 && j - i <= 2; ++j) {
        const CorrespondenceSet set = sample_correspondences(s, i, j, cfg, seed);
        for (const Correspondence& m : set.pairs) {
          const Vec3 in_j = s.poses[std::size_t(j)].inverse() * world_point(s, std::size_t(i), m.ui);
          const double visible = oracle_first_hit(s, std::size_t(j), m.uj);
          CHECK(in_j.z() <= 1.01 * visible);
        }
      }
  }
}

TEST_CASE("sample_correspondences is deterministic and flags shortfalls") {
  const GroundTruthScene s = generate_scene(3, 32, 24, 12);
  const MatchNoiseConfig cfg;
  const CorrespondenceSet a = sample_correspondences(s, 0, 1, cfg, 5);
  const CorrespondenceSet b = sample_correspondences(s, 0, 1, cfg, 5);
  REQUIRE(a.count() == b.count());
  for (std::size_t k = 0; k < a.count(); ++k) {
    CHECK(a.pairs[k].ui.x == b.pairs[k].ui.x);
    CHECK(a.pairs[k].uj.y == b.pairs[k].uj.y);
  }
  MatchNoiseConfig many;
  many.matches_per_pair = 1000000;
  many.pixel_sigma = 0.0;
  const CorrespondenceSet partial = sample_correspondences(generate_scene(2, 4, 4, 1), 0, 1, many, 1);
  CHECK(partial.partial);
  CHECK_THROWS_AS(sample_correspondences(s, 0, 0, cfg, 1), Error);
}

TEST_CASE("match noise stays within 4 sigma per coordinate at the 99.99% level") {
  MatchNoiseConfig cfg;
  cfg.matches_per_pair = 2000;
  std::size_t coords = 0;
  std::size_t beyond = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const GroundTruthScene s = generate_scene(8, 64, 48, 100 + seed);
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8 && j - i <= 2; ++j) {
        const CorrespondenceSet set = sample_correspondences(s, i, j, cfg, seed);
        for (const Correspondence& m : set.pairs) {
          const Vec3 in_j = s.poses[std::size_t(j)].inverse() * world_point(s, std::size_t(i), m.ui);
          const Pixel exact = project(in_j, s.intrinsics[std::size_t(j)]);
          beyond += std::abs(m.uj.x - exact.x) > 4 * cfg.pixel_sigma;
          beyond += std::abs(m.uj.y - exact.y) > 4 * cfg.pixel_sigma;
          coords += 2;
        }
      }
  }
  CHECK(coords > 300000);
  CHECK(double(beyond) <= 1e-4 * double(coords));
}

TEST_CASE("default 8-view problem has a connected pair graph") {
  const SimulatedProblem sim = simulate(8, 64, 48, CorruptionConfig{}, MatchNoiseConfig{}, 42);
  CHECK(sim.problem.view_count() == 8);
  CHECK(sim.problem.correspondences.size() == 13);
  CHECK(sim.problem.pair_graph_connected());
  CHECK_NOTHROW(sim.problem.validate());
  for (const CorrespondenceSet& set : sim.problem.correspondences) CHECK(set.count() > 0);
}

TEST_CASE("zero-corruption problems admit a ground-truth state with near-zero loss") {
  CorruptionConfig clean;
  clean.field_amplitude = 0.0;
  clean.scale_min = clean.scale_max = 1.0;
  MatchNoiseConfig exact;
  exact.pixel_sigma = 0.0;
  for (std::uint64_t seed : {42u, 43u}) {
    const SimulatedProblem sim = simulate(8, 64, 48, clean, exact, seed);
    CHECK(total_loss(ground_truth_state(sim, 16), sim.problem).total <= 1e-8);
  }
  // Per-view scales are undone by the log-scales of the ground-truth state.
  CorruptionConfig scaled = clean;
  scaled.scale_min = 0.7;
  scaled.scale_max = 1.3;
  const SimulatedProblem sim = simulate(6, 48, 36, scaled, exact, 44);
  CHECK(total_loss(ground_truth_state(sim, 8), sim.problem).total <= 1e-8);
}

TEST_CASE("simulate is deterministic") {
  const SimulatedProblem a = simulate(4, 32, 24, CorruptionConfig{}, MatchNoiseConfig{}, 9);
  const SimulatedProblem b = simulate(4, 32, 24, CorruptionConfig{}, MatchNoiseConfig{}, 9);
  for (std::size_t v = 0; v < 4; ++v) CHECK(a.problem.views[v].pseudo_depth == b.problem.views[v].pseudo_depth);
  REQUIRE(a.problem.correspondences.size() == b.problem.correspondences.size());
  for (std::size_t k = 0; k < a.problem.correspondences.size(); ++k) {
    const auto& x = a.problem.correspondences[k].pairs;
    const auto& y = b.problem.correspondences[k].pairs;
    REQUIRE(x.size() == y.size());
    for (std::size_t m = 0; m < x.size(); ++m) CHECK((x[m].uj.x == y[m].uj.x && x[m].ui.y == y[m].ui.y));
  }
}
