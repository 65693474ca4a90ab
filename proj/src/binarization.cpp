#include "bwn/binarization.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

#include "bwn/error.hpp"
#include "bwn/log.hpp"
#include "bwn/rng.hpp"

namespace bwn {

namespace {

std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& warning_handler() {
  static WarningHandler handler;
  return handler;
}

void check_finite(std::span<const float> values, const char* op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) {
      throw Error(Errc::non_finite, std::string(op) + ": NaN at index " + std::to_string(i));
    }
  }
}

void check_nonempty(std::span<const float> filter, const char* op) {
  if (filter.empty()) throw Error(Errc::invalid_argument, std::string(op) + ": empty filter");
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(warning_mutex());
  return std::exchange(warning_handler(), std::move(handler));
}

void warn(std::string_view message) {
  std::lock_guard lock(warning_mutex());
  if (warning_handler()) {
    warning_handler()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

Tensor sign_binarize(const Tensor& w) {
  check_finite(w.data(), "sign_binarize");
  Tensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] >= 0.0f ? 1.0f : -1.0f;
  return out;
}

double hard_sigmoid(double x) noexcept { return std::clamp((x + 1.0) / 2.0, 0.0, 1.0); }

Tensor stochastic_binarize(const Tensor& w, std::uint64_t seed) {
  check_finite(w.data(), "stochastic_binarize");
  Rng rng(seed);
  Tensor out(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) {
    // One draw per element, consumed even when p saturates, so element i
    // always sees the same uniform for a given seed.
    const double u = rng.uniform();
    out[i] = u < hard_sigmoid(w[i]) ? 1.0f : -1.0f;
  }
  return out;
}

float optimal_scale(std::span<const float> filter) {
  check_nonempty(filter, "optimal_scale");
  check_finite(filter, "optimal_scale");
  double l1 = 0.0;
  for (float v : filter) l1 += std::fabs(static_cast<double>(v));
  return static_cast<float>(l1 / static_cast<double>(filter.size()));
}

FilterBinarization binarize_filter(std::span<const float> filter) {
  check_nonempty(filter, "binarize_filter");
  check_finite(filter, "binarize_filter");
  FilterBinarization result;
  result.signs.resize(filter.size());
  for (std::size_t i = 0; i < filter.size(); ++i) result.signs[i] = filter[i] >= 0.0f ? 1 : -1;
  result.scale = optimal_scale(filter);
  return result;
}

double objective_j(std::span<const float> filter, std::span<const std::int8_t> signs,
                   double scale) {
  if (filter.size() != signs.size()) {
    throw Error(Errc::shape_mismatch, "objective_j: filter length " +
                                          std::to_string(filter.size()) + " != sign length " +
                                          std::to_string(signs.size()));
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < filter.size(); ++i) {
    if (signs[i] != 1 && signs[i] != -1) {
      throw Error(Errc::invalid_argument, "objective_j: sign " + std::to_string(signs[i]) +
                                              " at index " + std::to_string(i) +
                                              " is not +1/-1");
    }
    const double r = static_cast<double>(filter[i]) - scale * signs[i];
    sq += r * r;
  }
  return std::sqrt(sq);
}

BruteForceOptimum brute_force_optimum(std::span<const float> filter) {
  check_nonempty(filter, "brute_force_optimum");
  check_finite(filter, "brute_force_optimum");
  const std::size_t n = filter.size();
  if (n > kBruteForceMaxLength) {
    throw Error(Errc::invalid_argument, "brute_force_optimum: length " + std::to_string(n) +
                                            " exceeds enumeration bound " +
                                            std::to_string(kBruteForceMaxLength));
  }

  BruteForceOptimum best;
  best.objective = INFINITY;
  std::vector<std::int8_t> signs(n);
  for (std::uint32_t pattern = 0; pattern < (1u << n); ++pattern) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      signs[i] = (pattern >> i) & 1u ? 1 : -1;
      dot += static_cast<double>(filter[i]) * signs[i];
    }
    const double a = std::max(0.0, dot / static_cast<double>(n));
    const double j = objective_j(filter, signs, a);
    if (j < best.objective) {
      best.objective = j;
      best.scale = a;
      best.signs = signs;
    }
  }
  return best;
}

BinaryFilterBank::BinaryFilterBank(Extents filter_shape, std::size_t num_filters,
                                   std::vector<std::uint64_t> words, std::vector<float> scales)
    : filter_shape_(std::move(filter_shape)),
      num_filters_(num_filters),
      bits_per_filter_(element_count(filter_shape_)),
      words_(std::move(words)),
      scales_(std::move(scales)) {
  if (filter_shape_.empty() || bits_per_filter_ == 0 || num_filters_ == 0) {
    throw Error(Errc::invalid_argument,
                "binary filter bank: empty filter shape " + shape_string(filter_shape_) +
                    " or zero filters");
  }
  if (words_.size() != num_filters_ * words_per_filter()) {
    throw Error(Errc::length_mismatch, "binary filter bank: " + std::to_string(words_.size()) +
                                           " words, expected " +
                                           std::to_string(num_filters_ * words_per_filter()));
  }
  if (scales_.size() != num_filters_) {
    throw Error(Errc::length_mismatch, "binary filter bank: " + std::to_string(scales_.size()) +
                                           " scales for " + std::to_string(num_filters_) +
                                           " filters");
  }
  const std::size_t tail = bits_per_filter_ % 64;
  if (tail != 0) {
    const std::uint64_t pad_mask = ~((std::uint64_t{1} << tail) - 1);
    for (std::size_t f = 0; f < num_filters_; ++f) {
      if (words_[(f + 1) * words_per_filter() - 1] & pad_mask) {
        throw Error(Errc::nonzero_padding,
                    "binary filter bank: nonzero padding bits in filter " + std::to_string(f));
      }
    }
  }
  for (std::size_t f = 0; f < num_filters_; ++f) {
    if (!std::isfinite(scales_[f]) || scales_[f] < 0.0f) {
      throw Error(Errc::invalid_argument, "binary filter bank: scale " +
                                              std::to_string(scales_[f]) + " of filter " +
                                              std::to_string(f) + " is not finite and >= 0");
    }
  }
}

BinaryFilterBank BinaryFilterBank::from_signs(Extents filter_shape,
                                              std::span<const std::int8_t> signs,
                                              std::vector<float> scales) {
  const std::size_t n = element_count(filter_shape);
  const std::size_t F = scales.size();
  if (n == 0 || signs.size() != n * F) {
    throw Error(Errc::shape_mismatch, "binary filter bank: " + std::to_string(signs.size()) +
                                          " signs for " + std::to_string(F) + " filters of " +
                                          shape_string(filter_shape));
  }
  const std::size_t wpf = words_for(n);
  std::vector<std::uint64_t> words(F * wpf, 0);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::int8_t s = signs[f * n + i];
      if (s != 1 && s != -1) {
        throw Error(Errc::invalid_argument, "binary filter bank: sign " + std::to_string(s) +
                                                " is not +1/-1");
      }
      if (s == 1) words[f * wpf + i / 64] |= std::uint64_t{1} << (i % 64);
    }
  }
  return BinaryFilterBank(std::move(filter_shape), F, std::move(words), std::move(scales));
}

Extents BinaryFilterBank::weight_shape() const {
  Extents shape{num_filters_};
  shape.insert(shape.end(), filter_shape_.begin(), filter_shape_.end());
  return shape;
}

BinaryFilterBank binarize_bank(const Tensor& weights) {
  if (weights.rank() < 2 || weights.empty()) {
    throw Error(Errc::shape_mismatch,
                "binarize_bank: need [F, ...] weights, got " + shape_string(weights.shape()));
  }
  const std::size_t F = weights.dim(0);
  const std::size_t n = weights.size() / F;
  std::vector<std::int8_t> signs;
  signs.reserve(weights.size());
  std::vector<float> scales(F);
  for (std::size_t f = 0; f < F; ++f) {
    const auto filter = weights.data().subspan(f * n, n);
    FilterBinarization b = binarize_filter(filter);
    if (b.scale == 0.0f) {
      warn("binarize: filter " + std::to_string(f) + " of " + shape_string(weights.shape()) +
           " is all zero; its binarized output is identically zero");
    }
    signs.insert(signs.end(), b.signs.begin(), b.signs.end());
    scales[f] = b.scale;
  }
  Extents filter_shape(weights.shape().begin() + 1, weights.shape().end());
  return BinaryFilterBank::from_signs(std::move(filter_shape), signs, std::move(scales));
}

Tensor expand(const BinaryFilterBank& bank) {
  Tensor out(bank.weight_shape());
  const std::size_t n = bank.bits_per_filter();
  for (std::size_t f = 0; f < bank.num_filters(); ++f) {
    const float a = bank.scale(f);
    for (std::size_t i = 0; i < n; ++i) out[f * n + i] = bank.positive(f, i) ? a : -a;
  }
  return out;
}

}  // namespace bwn
