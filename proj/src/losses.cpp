#include "relieve/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "relieve/error.hpp"
#include "relieve/parallel.hpp"

namespace relieve {

double charbonnier(double x, double eps) { return std::sqrt(x * x + eps * eps) - eps; }

double charbonnier_derivative(double x, double eps) { return x / std::sqrt(x * x + eps * eps); }

ConfidenceTerm confidence_term(double residual, double logit, double alpha) {
  const double w = confidence_from_logit(logit);
  ConfidenceTerm t;
  t.value = w * residual - alpha * std::log(w);
  t.d_logit = (residual - alpha / w) * confidence_slope(w);
  t.d_residual = w;
  return t;
}

DepthLossResult depth_loss(std::span<const double> pred, std::span<const double> pseudo,
                           std::span<const double> logits, const HyperParams& hp, const DepthStats* frozen) {
  const std::size_t n = pred.size();
  if (n == 0 || pseudo.size() != n || logits.size() != n) throw domain_error("depth_loss: shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(pseudo[i] > 0)) throw domain_error("depth_loss: non-positive pseudo depth at pixel " + std::to_string(i));
  }

  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = confidence_from_logit(logits[i]);

  DepthLossResult out;
  if (frozen) {
    out.stats = *frozen;
  } else {
    out.stats.pred = wmad_stats(pred, weights);
    out.stats.pseudo = wmad_stats(pseudo, weights);
  }
  const double inv_n = 1.0 / double(n);
  const double inv_scale = 1.0 / out.stats.pred.scale();
  out.grad_pred.resize(n);
  out.grad_logits.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = out.stats.pred.apply(pred[i]) - out.stats.pseudo.apply(pseudo[i]);
    const double e = charbonnier(delta, hp.charbonnier_eps);
    const ConfidenceTerm t = confidence_term(e, logits[i], hp.alpha);
    sum += t.value;
    out.grad_pred[i] = t.d_residual * charbonnier_derivative(delta, hp.charbonnier_eps) * inv_scale * inv_n;
    out.grad_logits[i] = t.d_logit * inv_n;
  }
  out.value = sum * inv_n;
  return out;
}

DepthLossResult depth_loss(const DepthMap& pred, const DepthMap& pseudo, const ConfidenceMap& conf,
                           const HyperParams& hp) {
  if (pred.width != pseudo.width || pred.height != pseudo.height || conf.width != pred.width ||
      conf.height != pred.height)
    throw domain_error("depth_loss: shape mismatch");
  return depth_loss(pred.values, pseudo.values, conf.logits, hp);
}

double vector_angle(const Vec3& a, const Vec3& b) {
  if (a.squaredNorm() == 0 || b.squaredNorm() == 0) throw domain_error("vector_angle: zero-length vector");
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

double vector_angle(const Vec3& a, const Vec3& b, double eps, Vec3& grad_a, Vec3& grad_b) {
  const Vec3 c = a.cross(b);
  const double n = c.norm();
  const double dot = a.dot(b);
  const double den = n * n + dot * dot;
  if (den == 0) {
    grad_a.setZero();
    grad_b.setZero();
    return 0.0;
  }
  const double n_floor = std::max(n, eps);
  grad_a = (dot / n_floor * b.cross(c) - n * b) / den;
  grad_b = (dot / n_floor * c.cross(a) - n * a) / den;
  return std::atan2(n, dot);
}

GridUpsampler::GridUpsampler(int width, int height, int grid) {
  taps_.resize(std::size_t(width) * height);
  auto axis = [grid](int pos, int extent, int& i0, int& i1, double& t) {
    if (grid == 1 || extent == 1) {
      i0 = i1 = 0;
      t = 0.0;
      return;
    }
    const double f = double(pos) * double(grid - 1) / double(extent - 1);
    i0 = std::min(int(std::floor(f)), grid - 2);
    i1 = i0 + 1;
    t = f - i0;
  };
  for (int y = 0; y < height; ++y) {
    int y0, y1;
    double ty;
    axis(y, height, y0, y1, ty);
    for (int x = 0; x < width; ++x) {
      int x0, x1;
      double tx;
      axis(x, width, x0, x1, tx);
      Tap& tap = taps_[std::size_t(y) * width + x];
      tap.node[0] = y0 * grid + x0;
      tap.node[1] = y0 * grid + x1;
      tap.node[2] = y1 * grid + x0;
      tap.node[3] = y1 * grid + x1;
      tap.weight[0] = (1 - tx) * (1 - ty);
      tap.weight[1] = tx * (1 - ty);
      tap.weight[2] = (1 - tx) * ty;
      tap.weight[3] = tx * ty;
    }
  }
}

std::vector<double> GridUpsampler::upsample(std::span<const double> grid) const {
  std::vector<double> out(taps_.size());
  for (std::size_t p = 0; p < taps_.size(); ++p) {
    const Tap& t = taps_[p];
    out[p] = t.weight[0] * grid[t.node[0]] + t.weight[1] * grid[t.node[1]] + t.weight[2] * grid[t.node[2]] +
             t.weight[3] * grid[t.node[3]];
  }
  return out;
}

DepthTap depth_tap(const Pixel& u, int width, int height) {
  auto axis = [](double pos, int extent, int& i0, int& i1, double& t) {
    if (extent == 1) {
      i0 = i1 = 0;
      t = 0.0;
      return;
    }
    const double c = std::clamp(pos, 0.0, double(extent - 1));
    i0 = std::min(int(std::floor(c)), extent - 2);
    i1 = i0 + 1;
    t = c - i0;
  };
  int x0, x1, y0, y1;
  double tx, ty;
  axis(u.x, width, x0, x1, tx);
  axis(u.y, height, y0, y1, ty);
  DepthTap tap;
  tap.pixel[0] = std::size_t(y0) * width + x0;
  tap.pixel[1] = std::size_t(y0) * width + x1;
  tap.pixel[2] = std::size_t(y1) * width + x0;
  tap.pixel[3] = std::size_t(y1) * width + x1;
  tap.weight[0] = (1 - tx) * (1 - ty);
  tap.weight[1] = tx * (1 - ty);
  tap.weight[2] = (1 - tx) * ty;
  tap.weight[3] = tx * ty;
  return tap;
}

double sample_depth(const DepthTap& tap, std::span<const double> depth) {
  double inv = 0.0;
  for (int k = 0; k < 4; ++k) inv += tap.weight[k] / depth[tap.pixel[k]];
  return 1.0 / inv;
}

Objective::Objective(const Problem& problem, int grid_size, int threads)
    : problem_(&problem), layout_(problem, grid_size), threads_(std::max(threads, 1)) {
  problem.hyper.validate();
  for (const View& view : problem.views) {
    upsamplers_.emplace_back(view.pseudo_depth.width, view.pseudo_depth.height, grid_size);
    for (std::size_t i = 0; i < view.pseudo_depth.size(); ++i)
      if (!(view.pseudo_depth.values[i] > 0))
        throw domain_error("objective: non-positive pseudo depth at pixel " + std::to_string(i));
  }
}

DerivedDepth Objective::derive(const SceneState& state, std::size_t view) const {
  const ViewParams& p = state.views[view];
  const std::vector<double> up = upsamplers_[view].upsample(p.residual);
  const double scale = std::exp(p.log_scale);
  DerivedDepth d;
  d.shape.resize(up.size());
  d.predicted.resize(up.size());
  const std::vector<double>& pseudo = problem_->views[view].pseudo_depth.values;
  // pseudo * exp(r) rather than exp(log pseudo + r): exact at r = 0, so an
  // untouched view reproduces its pseudo depth bit for bit.
  for (std::size_t i = 0; i < up.size(); ++i) {
    d.shape[i] = pseudo[i] * std::exp(up[i]);
    d.predicted[i] = scale * d.shape[i];
  }
  return d;
}

FrozenStats Objective::freeze(const SceneState& state) const {
  FrozenStats stats(problem_->views.size());
  parallel_for(stats.size(), threads_, [&](std::size_t v) {
    const DerivedDepth d = derive(state, v);
    const std::vector<double> w = state.views[v].confidence.weights();
    stats[v].pred = wmad_stats(d.shape, w);
    stats[v].pseudo = wmad_stats(problem_->views[v].pseudo_depth.values, w);
  });
  return stats;
}

namespace {

// Gradient of one correspondence set with respect to the two views it
// touches: pose (6), log-scale (1), residual grid (G*G) each.
struct SetContribution {
  double angle_sum = 0.0;
  std::size_t terms = 0;
  std::vector<double> grad_i;
  std::vector<double> grad_j;
};

// Pushes d(loss)/d(depth at a lookup) onto log-scale and residual entries.
void scatter_depth_gradient(double g_depth, double depth, const DepthTap& tap, std::span<const double> predicted,
                            const GridUpsampler& up, std::vector<double>& grad) {
  // grad layout: [0..5] pose, [6] log-scale, [7..] residual nodes
  grad[6] += g_depth * depth;
  for (int k = 0; k < 4; ++k) {
    const std::size_t px = tap.pixel[k];
    const double d_log = g_depth * depth * depth * tap.weight[k] / predicted[px];
    const GridUpsampler::Tap& t = up.tap(px);
    for (int m = 0; m < 4; ++m) grad[7 + std::size_t(t.node[m])] += d_log * t.weight[m];
  }
}

}  // namespace

LossBreakdown Objective::evaluate(const SceneState& state, const FrozenStats* frozen) const {
  const Problem& problem = *problem_;
  const std::size_t n_views = problem.views.size();
  if (state.views.size() != n_views) throw domain_error("objective: state/problem view count mismatch");
  if (frozen && frozen->size() != n_views) throw domain_error("objective: frozen statistics size mismatch");
  const std::size_t g2 = std::size_t(layout_.grid_size()) * layout_.grid_size();
  for (const ViewParams& p : state.views)
    if (p.residual.size() != g2) throw domain_error("objective: residual grid size mismatch");

  LossBreakdown out;
  out.gradient = Eigen::VectorXd::Zero(Eigen::Index(layout_.size()));

  // Depth term, one view per work item. Each view writes only its own block.
  std::vector<DerivedDepth> derived(n_views);
  std::vector<double> depth_values(n_views, 0.0);
  const double view_weight = 1.0 / double(n_views);
  parallel_for(n_views, threads_, [&](std::size_t v) {
    derived[v] = derive(state, v);
    const ViewParams& p = state.views[v];
    const DepthLossResult r = depth_loss(derived[v].shape, problem.views[v].pseudo_depth.values, p.confidence.logits,
                                         problem.hyper, frozen ? &(*frozen)[v] : nullptr);
    depth_values[v] = r.value;
    const ViewBlock& b = layout_.view(v);
    const GridUpsampler& up = upsamplers_[v];
    for (std::size_t i = 0; i < r.grad_pred.size(); ++i) {
      const double d_log = r.grad_pred[i] * derived[v].shape[i] * view_weight;
      const GridUpsampler::Tap& t = up.tap(i);
      for (int m = 0; m < 4; ++m) out.gradient[Eigen::Index(b.residual + std::size_t(t.node[m]))] += d_log * t.weight[m];
      out.gradient[Eigen::Index(b.logits + i)] = r.grad_logits[i] * view_weight;
    }
  });

  // Registration term, one correspondence set per work item.
  const std::size_t n_sets = problem.correspondences.size();
  std::vector<SetContribution> sets(n_sets);
  parallel_for(n_sets, threads_, [&](std::size_t s) {
    const CorrespondenceSet& set = problem.correspondences[s];
    SetContribution& c = sets[s];
    c.grad_i.assign(7 + g2, 0.0);
    c.grad_j.assign(7 + g2, 0.0);
    const std::size_t vi = std::size_t(set.view_i);
    const std::size_t vj = std::size_t(set.view_j);
    const View& view_i = problem.views[vi];
    const View& view_j = problem.views[vj];
    const PoseSE3& pose_i = state.views[vi].pose;
    const PoseSE3& pose_j = state.views[vj].pose;

    for (const Correspondence& m : set.pairs) {
      if (!pixel_in_image(m.ui, view_i.intrinsics) || !pixel_in_image(m.uj, view_j.intrinsics))
        throw domain_error("registration_loss: correspondence outside the image");
      const DepthTap tap_i = depth_tap(m.ui, view_i.intrinsics.width, view_i.intrinsics.height);
      const DepthTap tap_j = depth_tap(m.uj, view_j.intrinsics.width, view_j.intrinsics.height);
      const double d_i = sample_depth(tap_i, derived[vi].predicted);
      const double d_j = sample_depth(tap_j, derived[vj].predicted);
      // Camera-frame offsets rotated into the world: p - t for each view.
      const Vec3 q_i = pose_i.rotation * (d_i * pixel_ray(m.ui, view_i.intrinsics));
      const Vec3 q_j = pose_j.rotation * (d_j * pixel_ray(m.uj, view_j.intrinsics));
      const Vec3 baseline = pose_j.translation - pose_i.translation;

      // Anchor i: angle(p_i - t_i, p_j - t_i); anchor j mirrors it.
      for (int dir = 0; dir < 2; ++dir) {
        const bool anchor_i = dir == 0;
        const Vec3& own = anchor_i ? q_i : q_j;
        const Vec3& other = anchor_i ? q_j : q_i;
        const Vec3 b = other + (anchor_i ? baseline : Vec3(-baseline));
        Vec3 ga;
        Vec3 gb;
        c.angle_sum += vector_angle(own, b, problem.hyper.angle_eps, ga, gb);
        ++c.terms;

        std::vector<double>& g_own = anchor_i ? c.grad_i : c.grad_j;
        std::vector<double>& g_other = anchor_i ? c.grad_j : c.grad_i;
        // Rotation perturbation R <- exp(w) R moves q by w x q.
        const Vec3 w_own = own.cross(ga);
        const Vec3 w_other = other.cross(gb);
        for (int k = 0; k < 3; ++k) {
          g_own[k] += w_own[k];
          g_other[k] += w_other[k];
          g_other[3 + k] += gb[k];
          g_own[3 + k] -= gb[k];
        }
        const double d_own = anchor_i ? d_i : d_j;
        const double d_other = anchor_i ? d_j : d_i;
        const double g_d_own = ga.dot(own) / d_own;
        const double g_d_other = gb.dot(other) / d_other;
        scatter_depth_gradient(g_d_own, d_own, anchor_i ? tap_i : tap_j,
                               anchor_i ? derived[vi].predicted : derived[vj].predicted,
                               anchor_i ? upsamplers_[vi] : upsamplers_[vj], g_own);
        scatter_depth_gradient(g_d_other, d_other, anchor_i ? tap_j : tap_i,
                               anchor_i ? derived[vj].predicted : derived[vi].predicted,
                               anchor_i ? upsamplers_[vj] : upsamplers_[vi], g_other);
      }
    }
  });

  double depth_sum = 0.0;
  for (double v : depth_values) depth_sum += v;
  out.depth_term = depth_sum * view_weight;

  std::size_t terms = 0;
  double angle_sum = 0.0;
  for (const SetContribution& c : sets) {
    terms += c.terms;
    angle_sum += c.angle_sum;
  }
  if (terms > 0) {
    out.registration_term = angle_sum / double(terms);
    const double scale = problem.hyper.lambda / double(terms);
    for (std::size_t s = 0; s < n_sets; ++s) {
      const CorrespondenceSet& set = problem.correspondences[s];
      const ViewBlock& bi = layout_.view(std::size_t(set.view_i));
      const ViewBlock& bj = layout_.view(std::size_t(set.view_j));
      for (std::size_t k = 0; k < 7 + g2; ++k) {
        out.gradient[Eigen::Index(bi.pose + k)] += scale * sets[s].grad_i[k];
        out.gradient[Eigen::Index(bj.pose + k)] += scale * sets[s].grad_j[k];
      }
    }
  }
  out.total = out.depth_term + problem.hyper.lambda * out.registration_term;
  return out;
}

double Objective::registration_value(const SceneState& state) const { return evaluate(state).registration_term; }

double registration_loss(const SceneState& state, const Problem& problem) {
  return Objective(problem, state.grid_size).registration_value(state);
}

LossBreakdown total_loss(const SceneState& state, const Problem& problem, int threads) {
  return Objective(problem, state.grid_size, threads).evaluate(state);
}

double finite_difference_check(const SceneState& state, const Problem& problem, int probe_count, double step,
                               std::uint64_t seed) {
  if (probe_count < 1) throw domain_error("finite_difference_check: probe_count must be >= 1");
  if (!(step > 0)) throw domain_error("finite_difference_check: step must be positive");
  const Objective objective(problem, state.grid_size);
  const FrozenStats frozen = objective.freeze(state);
  const LossBreakdown base = objective.evaluate(state, &frozen);
  const ParamLayout& layout = objective.layout();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, layout.size() - 1);
  double worst = 0.0;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(Eigen::Index(layout.size()));
  for (int probe = 0; probe < probe_count; ++probe) {
    const Eigen::Index k = Eigen::Index(pick(rng));
    SceneState plus = state;
    SceneState minus = state;
    delta[k] = step;
    plus.retract(layout, delta);
    delta[k] = -step;
    minus.retract(layout, delta);
    delta[k] = 0.0;
    const double fd = (objective.evaluate(plus, &frozen).total - objective.evaluate(minus, &frozen).total) / (2 * step);
    worst = std::max(worst, std::abs(base.gradient[k] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace relieve
