#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bwn/tensor.hpp"

namespace bwn {

// Sign convention everywhere: +1 for x >= 0, -1 otherwise, so Sign(0) = +1.

/// Elementwise deterministic sign. Throws non_finite on NaN.
Tensor sign_binarize(const Tensor& w);

/// Hard sigmoid clip((x + 1) / 2, 0, 1).
double hard_sigmoid(double x) noexcept;

/// Each element independently +1 with probability hard_sigmoid(x). The
/// result is a pure function of (w, seed).
Tensor stochastic_binarize(const Tensor& w, std::uint64_t seed);

/// Mean absolute value: the scale minimising ||W - aB|| once B = Sign(W).
float optimal_scale(std::span<const float> filter);

struct FilterBinarization {
  std::vector<std::int8_t> signs;
  float scale = 0.0f;
};

/// B = Sign(W) and a = mean|W| for one filter.
FilterBinarization binarize_filter(std::span<const float> filter);

/// J(B, a) = ||W - aB||_2 (the norm, not its square; both share minimisers).
/// Throws invalid_argument if a sign is not +1/-1.
double objective_j(std::span<const float> filter, std::span<const std::int8_t> signs,
                   double scale);

struct BruteForceOptimum {
  std::vector<std::int8_t> signs;
  double scale = 0.0;
  double objective = 0.0;
};

inline constexpr std::size_t kBruteForceMaxLength = 16;

/// Exhaustive search over all 2^n sign patterns, each paired with its own
/// best non-negative scale max(0, W.B / n). Ground truth for binarize_filter.
/// The first pattern in enumeration order wins exact ties.
BruteForceOptimum brute_force_optimum(std::span<const float> filter);

/// Per-filter sign bits plus one scale per filter: the binarised form aB of
/// one layer's weights. Bits are packed LSB-first into 64-bit words, each
/// filter starting on a fresh word; bit value 1 encodes +1.
class BinaryFilterBank {
 public:
  BinaryFilterBank() = default;

  /// Validates that padding bits are zero and scales are finite and >= 0.
  BinaryFilterBank(Extents filter_shape, std::size_t num_filters,
                   std::vector<std::uint64_t> words, std::vector<float> scales);

  /// Builds from explicit +1/-1 signs laid out filter-major.
  static BinaryFilterBank from_signs(Extents filter_shape, std::span<const std::int8_t> signs,
                                     std::vector<float> scales);

  static std::size_t words_for(std::size_t bits) noexcept { return (bits + 63) / 64; }

  /// Extents of one filter, e.g. [C,kh,kw] for a convolution.
  const Extents& filter_shape() const noexcept { return filter_shape_; }
  /// Full weight tensor shape [F, filter_shape...].
  Extents weight_shape() const;
  std::size_t num_filters() const noexcept { return num_filters_; }
  std::size_t bits_per_filter() const noexcept { return bits_per_filter_; }
  std::size_t words_per_filter() const noexcept { return words_for(bits_per_filter_); }

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<const std::uint64_t> filter_words(std::size_t f) const noexcept {
    return std::span<const std::uint64_t>(words_).subspan(f * words_per_filter(),
                                                           words_per_filter());
  }
  std::span<const float> scales() const noexcept { return scales_; }
  float scale(std::size_t f) const noexcept { return scales_[f]; }

  /// True when weight i of filter f is +1.
  bool positive(std::size_t f, std::size_t i) const noexcept {
    return (words_[f * words_per_filter() + i / 64] >> (i % 64)) & 1u;
  }

  friend bool operator==(const BinaryFilterBank&, const BinaryFilterBank&) = default;

 private:
  Extents filter_shape_;
  std::size_t num_filters_ = 0;
  std::size_t bits_per_filter_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<float> scales_;
};

/// Binarises every filter (slice along axis 0) of a weight tensor.
BinaryFilterBank binarize_bank(const Tensor& weights);

/// Dense tensor aB with the bank's weight shape.
Tensor expand(const BinaryFilterBank& bank);

}  // namespace bwn
