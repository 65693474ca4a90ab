#pragma once

// Deliberately naive reference implementations used only to check the
// optimised code paths. None of them share code with the functions they check.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bwn/metrics.hpp"
#include "bwn/tensor.hpp"

namespace bwn::oracle {

/// Zero-pads the input explicitly, then evaluates every output element as a
/// direct 4-deep sum.
TensorD conv2d_naive(const TensorD& input, const TensorD& weights, std::size_t stride,
                     std::size_t padding);

/// Operating point at an arbitrary threshold, by direct counting.
struct OperatingPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// Operating points at -inf, +inf and every midpoint between adjacent
/// distinct scores, in increasing threshold order.
std::vector<OperatingPoint> sweep_midpoints(std::span<const double> targets,
                                            std::span<const double> nontargets);

/// EER by linear interpolation between the two midpoint operating points that
/// bracket the first FAR/FRR crossing.
double eer_sweep(std::span<const double> targets, std::span<const double> nontargets);

/// Normalised minimum detection cost over the midpoint sweep.
double min_dcf_sweep(std::span<const double> targets, std::span<const double> nontargets,
                     const DcfParams& params);

/// Central difference (f(x + h) - f(x - h)) / 2h of a scalar function of one
/// coordinate.
double central_difference(const std::function<double(double)>& f, double x, double h);

}  // namespace bwn::oracle
