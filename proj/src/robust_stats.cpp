#include "relieve/robust_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relieve/error.hpp"

namespace relieve {

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw domain_error("weighted_median: empty input");
  if (values.size() != weights.size()) throw domain_error("weighted_median: length mismatch");

  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw domain_error("weighted_median: weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0)) throw domain_error("weighted_median: total weight is zero");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // Compare the running sum with the weight still above it rather than with
  // total/2: for equal weights both sides are then summed identically, so an
  // exact half split resolves to the lower median without rounding luck.
  std::vector<double> above(order.size(), 0.0);
  for (std::size_t k = order.size() - 1; k > 0; --k) above[k - 1] = above[k] + weights[order[k]];
  double cumulative = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cumulative += weights[order[k]];
    if (cumulative >= above[k]) return values[order[k]];
  }
  return values[order.back()];
}

WmadStats wmad_stats(std::span<const double> values, std::span<const double> weights) {
  WmadStats stats;
  stats.median = weighted_median(values, weights);
  std::vector<double> deviation(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) deviation[i] = std::abs(values[i] - stats.median);
  stats.mad = weighted_median(deviation, weights);
  return stats;
}

std::vector<double> wmad_normalize(std::span<const double> values, std::span<const double> weights) {
  const WmadStats stats = wmad_stats(values, weights);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = stats.apply(values[i]);
  return out;
}

}  // namespace relieve
