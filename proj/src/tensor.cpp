#include "bwn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "bwn/error.hpp"

namespace bwn {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::non_finite: return "non_finite";
    case Errc::missing_cache: return "missing_cache";
    case Errc::out_of_range: return "out_of_range";
    case Errc::not_found: return "not_found";
    case Errc::config: return "config";
    case Errc::numeric: return "numeric";
    case Errc::io: return "io";
    case Errc::bad_magic: return "bad_magic";
    case Errc::bad_version: return "bad_version";
    case Errc::crc_mismatch: return "crc_mismatch";
    case Errc::truncated: return "truncated";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::nonzero_padding: return "nonzero_padding";
    case Errc::bad_record: return "bad_record";
  }
  return "unknown";
}

std::size_t element_count(const Extents& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Extents& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Extents shape, T fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Extents shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw Error(Errc::shape_mismatch, "tensor data length " + std::to_string(data_.size()) +
                                          " does not match shape " + shape_string(shape_));
  }
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw Error(Errc::out_of_range, "axis " + std::to_string(axis) + " out of range for shape " +
                                        shape_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Extents shape) const {
  if (element_count(shape) != data_.size()) {
    throw Error(Errc::shape_mismatch,
                "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
Shape4 shape4(const BasicTensor<T>& t) {
  if (t.rank() != 4) {
    throw Error(Errc::shape_mismatch,
                "expected NCHW tensor, got shape " + shape_string(t.shape()));
  }
  const auto& s = t.shape();
  for (auto e : s) {
    if (e == 0) {
      throw Error(Errc::shape_mismatch, "zero extent in activation shape " + shape_string(s));
    }
  }
  return {s[0], s[1], s[2], s[3]};
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template Shape4 shape4(const BasicTensor<float>&);
template Shape4 shape4(const BasicTensor<double>&);

}  // namespace bwn
