#pragma once

#include <span>
#include <vector>

namespace relieve {

/// Floor applied to the weighted MAD before dividing.
inline constexpr double kMadFloor = 1e-6;

/// Lower weighted median: the smallest value whose cumulative weight (values
/// sorted ascending, stable) reaches half the total weight. Always returns one
/// of the inputs. Throws on empty input, length mismatch, negative or
/// non-finite weights, or zero total weight.
double weighted_median(std::span<const double> values, std::span<const double> weights);

/// Location/scale pair used by the WMAD normalization.
struct WmadStats {
  double median = 0.0;
  double mad = 0.0;  // raw weighted MAD, before flooring

  double scale() const { return mad > kMadFloor ? mad : kMadFloor; }
  double apply(double x) const { return (x - median) / scale(); }
};

WmadStats wmad_stats(std::span<const double> values, std::span<const double> weights);

/// (x - m) / max(s, kMadFloor), with m the weighted median of `values` and s
/// the weighted median of |values - m|.
std::vector<double> wmad_normalize(std::span<const double> values, std::span<const double> weights);

}  // namespace relieve
