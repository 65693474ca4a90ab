#pragma once

#include <algorithm>
#include <cstddef>

namespace bwn::detail {

// Output positions o in [lo, hi) whose input index o*stride + offset - pad
// lands inside [0, in).
struct ValidRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline ValidRange valid_range(std::size_t out, std::size_t in, std::size_t offset,
                              std::size_t stride, std::size_t pad) {
  const long long shift = static_cast<long long>(offset) - static_cast<long long>(pad);
  const long long s = static_cast<long long>(stride);
  long long lo = 0;
  if (shift < 0) lo = (-shift + s - 1) / s;
  const long long top = static_cast<long long>(in) - 1 - shift;
  long long hi = top < 0 ? 0 : top / s + 1;
  hi = std::min<long long>(hi, static_cast<long long>(out));
  if (lo >= hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace bwn::detail
