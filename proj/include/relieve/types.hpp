#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "relieve/geometry.hpp"

namespace relieve {

/// Row-major dense depth raster (row 0 is the top image row).
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 1.0) : width(w), height(h), values(std::size_t(w) * h, fill) {}

  std::size_t size() const { return values.size(); }
  double& at(int x, int y) { return values[std::size_t(y) * width + x]; }
  double at(int x, int y) const { return values[std::size_t(y) * width + x]; }

  bool operator==(const DepthMap&) const = default;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Confidence W = 2 * sigmoid(logit), strictly inside (0, 2).
inline double confidence_from_logit(double logit) { return 2.0 * sigmoid(logit); }
/// dW / dlogit expressed through W.
inline double confidence_slope(double w) { return w * (1.0 - 0.5 * w); }

struct ConfidenceMap {
  int width = 0;
  int height = 0;
  std::vector<double> logits;

  ConfidenceMap() = default;
  ConfidenceMap(int w, int h) : width(w), height(h), logits(std::size_t(w) * h, 0.0) {}

  std::size_t size() const { return logits.size(); }
  double weight(std::size_t i) const { return confidence_from_logit(logits[i]); }
  std::vector<double> weights() const;
};

struct Correspondence {
  Pixel ui;
  Pixel uj;
};

/// Pixel matches between view_i and view_j.
struct CorrespondenceSet {
  int view_i = 0;
  int view_j = 1;
  std::vector<Correspondence> pairs;
  // Set by the simulator when fewer matches than requested could be found.
  bool partial = false;

  std::size_t count() const { return pairs.size(); }
};

struct HyperParams {
  double alpha = 1.0;   // confidence barrier weight
  double lambda = 0.5;  // weight of the registration term
  double charbonnier_eps = 1e-6;
  double angle_eps = 1e-12;

  void validate() const;
};

}  // namespace relieve
