#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "relieve/error.hpp"
#include "relieve/losses.hpp"
#include "relieve/scene_sim.hpp"

using namespace relieve;

namespace {

constexpr double kPi = std::numbers::pi;

// ---- independent scalar oracles ----

double lower_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

// Equal-weight WMAD normalization through plain sorting.
std::vector<double> oracle_gamma(const std::vector<double>& d) {
  const double m = lower_median(d);
  std::vector<double> dev;
  for (double x : d) dev.push_back(std::abs(x - m));
  const double s = std::max(lower_median(dev), 1e-6);
  std::vector<double> out;
  for (double x : d) out.push_back((x - m) / s);
  return out;
}

double oracle_depth_loss_unit_weights(const std::vector<double>& pred, const std::vector<double>& pseudo) {
  const std::vector<double> a = oracle_gamma(pred);
  const std::vector<double> b = oracle_gamma(pseudo);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - b[i];
    sum += std::sqrt(r * r + 1e-12) - 1e-6;  // W = 1, log W = 0
  }
  return sum / double(a.size());
}

double acos_angle(const Vec3& a, const Vec3& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Problem two_view_fronto_parallel(double depth, const Pixel& ui, const Pixel& uj) {
  const CameraIntrinsics k{20, 20, 7.5, 5.5, 16, 12};
  Problem p;
  p.views.push_back({k, DepthMap(16, 12, depth)});
  p.views.push_back({k, DepthMap(16, 12, depth)});
  CorrespondenceSet set;
  set.view_i = 0;
  set.view_j = 1;
  set.pairs.push_back({ui, uj});
  p.correspondences.push_back(set);
  return p;
}

SceneState random_state(const Problem& problem, int grid, std::uint64_t seed) {
  SceneState s = init_state(problem, grid);
  const ParamLayout layout(problem, grid);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 0.05);
  Eigen::VectorXd delta(Eigen::Index(layout.size()));
  for (auto& x : delta) x = n(rng);
  s.retract(layout, delta);
  return s;
}

}  // namespace

TEST_CASE("charbonnier stays within eps of |x|") {
  for (double x : {0.0, 1e-9, 1e-6, 1e-3, 0.5, -2.0, 1e6}) {
    CHECK(charbonnier(x, 1e-6) <= std::abs(x));
    // A few ulps of |x| on top of the exact bound.
    CHECK(std::abs(x) - charbonnier(x, 1e-6) <= 1e-6 + 4 * std::numeric_limits<double>::epsilon() * std::abs(x));
  }
  CHECK(charbonnier(0.0, 1e-6) == 0.0);
}

TEST_CASE("depth_loss: pred equal to pseudo with W = 1") {
  const std::vector<double> d{3, 1, 4, 1, 5, 9, 2, 6};
  ConfidenceMap conf(4, 2);
  DepthMap m(4, 2);
  m.values = d;
  const DepthLossResult r = depth_loss(m, m, conf, HyperParams{});
  CHECK(r.value >= 0.0);
  CHECK(r.value <= 2e-6);
}

TEST_CASE("depth_loss: five-pixel example against the scalar oracle") {
  const std::vector<double> pred{1, 2, 3, 4, 5};
  const std::vector<double> pseudo{1, 2, 3, 4, 6};
  const std::vector<double> logits(5, 0.0);
  const DepthLossResult r = depth_loss(pred, pseudo, logits, HyperParams{});
  CHECK(std::abs(r.value - oracle_depth_loss_unit_weights(pred, pseudo)) < 1e-15);
  CHECK(r.value == doctest::Approx(0.2).epsilon(1e-5));
}

TEST_CASE("depth_loss matches the oracle on random unit-weight maps") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.5, 10);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pred(37), pseudo(37);
    for (double& x : pred) x = u(rng);
    for (double& x : pseudo) x = u(rng);
    const DepthLossResult r = depth_loss(pred, pseudo, std::vector<double>(37, 0.0), HyperParams{});
    CHECK(std::abs(r.value - oracle_depth_loss_unit_weights(pred, pseudo)) < 1e-13);
  }
}

TEST_CASE("depth_loss gradients match central differences under frozen statistics") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.5, 10), ul(-2, 2);
  std::vector<double> pred(30), pseudo(30), logits(30);
  for (double& x : pred) x = u(rng);
  for (double& x : pseudo) x = u(rng);
  for (double& x : logits) x = ul(rng);
  HyperParams hp;
  hp.alpha = 0.7;
  const DepthLossResult base = depth_loss(pred, pseudo, logits, hp);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<double> p = pred, m = pred;
    p[i] += h;
    m[i] -= h;
    const double fd = (depth_loss(p, pseudo, logits, hp, &base.stats).value -
                       depth_loss(m, pseudo, logits, hp, &base.stats).value) / (2 * h);
    CHECK(std::abs(fd - base.grad_pred[i]) < 1e-7);
    std::vector<double> lp = logits, lm = logits;
    lp[i] += h;
    lm[i] -= h;
    const double fdl = (depth_loss(pred, pseudo, lp, hp, &base.stats).value -
                        depth_loss(pred, pseudo, lm, hp, &base.stats).value) / (2 * h);
    CHECK(std::abs(fdl - base.grad_logits[i]) < 1e-7);
  }
}

TEST_CASE("depth_loss errors") {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{1, 2};
  CHECK_THROWS_AS(depth_loss(a, b, std::vector<double>(3, 0.0), HyperParams{}), Error);
  CHECK_THROWS_AS(depth_loss(a, std::vector<double>{1, 0, 2}, std::vector<double>(3, 0.0), HyperParams{}), Error);
}

TEST_CASE("confidence term: stationary point at W = alpha / e") {
  // e = 1, alpha = 1: W = 1 (logit 0) is stationary.
  CHECK(std::abs(confidence_term(1.0, 0.0, 1.0).d_logit) < 1e-15);
  for (double e : {0.6, 1.0, 2.5, 5.0})
    for (double alpha : {0.2, 1.0}) {
      const double w = alpha / e;
      if (w >= 2.0) continue;
      const double logit = std::log(w / (2.0 - w));  // inverse of 2*sigmoid
      CHECK(std::abs(confidence_term(e, logit, alpha).d_logit) < 1e-12);
    }
}

TEST_CASE("confidence term: minimizing over W alone with e = 1 drives W to 1") {
  double logit = 1.7;
  for (int k = 0; k < 5000; ++k) logit -= 0.5 * confidence_term(1.0, logit, 1.0).d_logit;
  CHECK(std::abs(confidence_from_logit(logit) - 1.0) < 1e-9);
}

TEST_CASE("vector_angle examples") {
  CHECK(vector_angle({1, 0, 0}, {0, 1, 0}) == doctest::Approx(kPi / 2).epsilon(1e-15));
  CHECK(vector_angle({0.3, -2, 5}, {0.3, -2, 5}) == 0.0);
  CHECK(vector_angle({1, 1, 0}, {1, 0, 0}) == doctest::Approx(kPi / 4).epsilon(1e-15));
  CHECK(vector_angle({1, 0, 0}, {-2, 0, 0}) == doctest::Approx(kPi).epsilon(1e-15));
  CHECK_THROWS_AS(vector_angle({0, 0, 0}, {1, 0, 0}), Error);
  CHECK_THROWS_AS(vector_angle({1, 0, 0}, {0, 0, 0}), Error);
}

TEST_CASE("vector_angle gradient matches finite differences") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 a(n(rng), n(rng), n(rng));
    const Vec3 b(n(rng), n(rng), n(rng));
    Vec3 ga, gb;
    vector_angle(a, b, 1e-12, ga, gb);
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = 1e-6;
      const double fda = (vector_angle(a + e, b) - vector_angle(a - e, b)) / 2e-6;
      const double fdb = (vector_angle(a, b + e) - vector_angle(a, b - e)) / 2e-6;
      CHECK(std::abs(fda - ga[c]) < 1e-7);
      CHECK(std::abs(fdb - gb[c]) < 1e-7);
    }
  }
}

TEST_CASE("vector_angle gradient is zero for a zero vector") {
  Vec3 ga, gb;
  CHECK(vector_angle(Vec3::Zero(), Vec3(1, 2, 3), 1e-12, ga, gb) == 0.0);
  CHECK(ga.norm() == 0.0);
  CHECK(gb.norm() == 0.0);
}

TEST_CASE("registration: baseline example with view j depth scaled by 1.1") {
  const CameraIntrinsics k{20, 20, 7.5, 5.5, 16, 12};
  const Vec3 point(0.3, 0.2, 5.0);
  const Vec3 center_j(1.0, 0.0, 0.0);
  const Pixel ui = project(point, k);
  const Pixel uj = project(point - center_j, k);
  const Problem problem = two_view_fronto_parallel(5.0, ui, uj);
  SceneState state = init_state(problem, 2);
  state.views[1].pose.translation = center_j;

  CHECK(registration_loss(state, problem) < 1e-10);

  state.views[1].log_scale = std::log(1.1);
  // Anchor i sees p_j moved along view j's ray; anchor j sees no change in
  // direction, so its term is zero. The mean is over both terms.
  const Vec3 p_j = center_j + 1.1 * (point - center_j);
  const double expected = 0.5 * acos_angle(point, p_j);
  CHECK(expected > 1e-3);
  CHECK(std::abs(registration_loss(state, problem) - expected) < 1e-12);
}

TEST_CASE("registration: out-of-image correspondence is rejected") {
  const Problem bad = two_view_fronto_parallel(5.0, {3, 3}, {16.5, 3});
  CHECK_THROWS_AS(registration_loss(init_state(bad, 2), bad), Error);
}

TEST_CASE("registration is nonnegative and zero only for collinear same-side points") {
  const Problem problem = two_view_fronto_parallel(5.0, {7.5, 5.5}, {7.5, 5.5});
  SceneState state = init_state(problem, 2);
  // Both cameras on the optical axis: the matched points are collinear with
  // either center and on the same side.
  state.views[1].pose.translation = Vec3(0, 0, -1);
  CHECK(registration_loss(state, problem) < 1e-15);
  state.views[1].pose.translation = Vec3(0.5, 0, 0);
  CHECK(registration_loss(state, problem) > 0.0);
}

TEST_CASE("sample_depth is exact on a tilted plane") {
  const CameraIntrinsics k{30, 30, 9.5, 7.5, 20, 16};
  // Plane n.X = c seen from the identity camera.
  const Vec3 n = Vec3(0.2, -0.3, 1.0).normalized();
  const double c = 4.0;
  auto plane_depth = [&](double x, double y) {
    const Vec3 ray = pixel_ray({x, y}, k);
    return c / n.dot(ray);
  };
  std::vector<double> depth(20 * 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 20; ++x) depth[std::size_t(y) * 20 + x] = plane_depth(x, y);
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> ux(0, 19), uy(0, 15);
  for (int i = 0; i < 200; ++i) {
    const Pixel u{ux(rng), uy(rng)};
    const double got = sample_depth(depth_tap(u, 20, 16), depth);
    CHECK(std::abs(got - plane_depth(u.x, u.y)) < 1e-12 * got);
  }
}

TEST_CASE("total = depth + lambda * registration, exactly") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CheckInstance inst = random_check_instance(seed);
    const LossBreakdown b = total_loss(inst.state, inst.problem);
    CHECK(std::abs(b.total - (b.depth_term + inst.problem.hyper.lambda * b.registration_term)) <= 1e-12);
  }
}

TEST_CASE("property: a global rotation leaves the registration loss unchanged") {
  const CheckInstance inst = random_check_instance(31);
  const double base = registration_loss(inst.state, inst.problem);
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 g = so3_exp(Vec3(n(rng), n(rng), n(rng)));
    SceneState moved = inst.state;
    for (ViewParams& v : moved.views) {
      v.pose.rotation = g * v.pose.rotation;
      v.pose.translation = g * v.pose.translation;
    }
    CHECK(std::abs(registration_loss(moved, inst.problem) - base) < 1e-12);
  }
}

TEST_CASE("property: total loss is invariant to global rigid motion and scale") {
  std::mt19937_64 rng(32);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> us(0.2, 5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CheckInstance inst = random_check_instance(100 + seed);
    const double base = total_loss(inst.state, inst.problem).total;
    const PoseSE3 g = se3_exp({Vec3(n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng))});
    SceneState rigid = inst.state;
    for (ViewParams& v : rigid.views) v.pose = g * v.pose;
    CHECK(std::abs(total_loss(rigid, inst.problem).total - base) <= 1e-9 * std::abs(base));
    const double s = us(rng);
    SceneState scaled = inst.state;
    for (ViewParams& v : scaled.views) {
      v.pose.translation *= s;
      v.log_scale += std::log(s);
    }
    CHECK(std::abs(total_loss(scaled, inst.problem).total - base) <= 1e-9 * std::abs(base));
  }
}

TEST_CASE("finite-difference check on random small instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CheckInstance inst = random_check_instance(seed);
    CHECK(finite_difference_check(inst.state, inst.problem, 40, 1e-6, seed) < 1e-6);
  }
}

TEST_CASE("finite-difference error shrinks with the step on a smooth instance") {
  const CheckInstance inst = random_check_instance(5);
  const double e4 = finite_difference_check(inst.state, inst.problem, 60, 1e-4, 9);
  const double e5 = finite_difference_check(inst.state, inst.problem, 60, 1e-5, 9);
  const double e6 = finite_difference_check(inst.state, inst.problem, 60, 1e-6, 9);
  CHECK(e5 <= e4);
  CHECK(e6 <= e5);
}

TEST_CASE("objective is bit-identical across thread counts") {
  const CheckInstance inst = random_check_instance(77, 4);
  const Objective one(inst.problem, 4, 1);
  const Objective many(inst.problem, 4, 5);
  const LossBreakdown a = one.evaluate(inst.state);
  const LossBreakdown b = many.evaluate(inst.state);
  CHECK(a.total == b.total);
  CHECK(a.gradient == b.gradient);
}

TEST_CASE("gradient check on a multi-view simulator problem") {
  CorruptionConfig cc;
  MatchNoiseConfig mc;
  mc.matches_per_pair = 30;
  const SimulatedProblem sim = simulate(5, 24, 18, cc, mc, 3);
  const SceneState s = random_state(sim.problem, 6, 4);
  CHECK(finite_difference_check(s, sim.problem, 200, 1e-6, 1) < 1e-6);
}
