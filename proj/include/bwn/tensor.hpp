#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bwn {

using Extents = std::vector<std::size_t>;

std::size_t element_count(const Extents& shape);
std::string shape_string(const Extents& shape);

/// Dense row-major n-dimensional array. Activations use NCHW order.
///
/// The engine runs on float; the double instantiation exists so gradient
/// checks can be carried out without float32 round-off dominating the
/// finite differences.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Extents shape, T fill = T{0});
  BasicTensor(Extents shape, std::vector<T> data);

  const Extents& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Element access for rank-4 tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new shape with identical element count.
  BasicTensor reshaped(Extents shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const noexcept;

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Extents shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Batched image extents of an NCHW tensor.
struct Shape4 {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Throws shape_mismatch unless the tensor has rank 4 with nonzero extents.
template <typename T>
Shape4 shape4(const BasicTensor<T>& t);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace bwn
