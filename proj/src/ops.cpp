#include "bwn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bwn/error.hpp"
#include "conv_geometry.hpp"

namespace bwn {
namespace {

using detail::ValidRange;
using detail::valid_range;

[[noreturn]] void shape_error(const std::string& what) { throw Error(Errc::shape_mismatch, what); }

template <typename T>
void check_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    shape_error(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
  }
}

template <typename T>
Shape4 check_conv_shapes(const BasicTensor<T>& input, const Extents& weight_shape,
                         std::size_t stride, std::size_t padding) {
  const Shape4 in = shape4(input);
  if (weight_shape.size() != 4) {
    shape_error("conv2d: weights must be [F,C,kh,kw], got " + shape_string(weight_shape));
  }
  if (weight_shape[1] != in.channels) {
    shape_error("conv2d: input channels " + std::to_string(in.channels) +
                " != weight channels " + std::to_string(weight_shape[1]));
  }
  if (stride == 0) throw Error(Errc::invalid_argument, "conv2d: stride must be >= 1");
  if (weight_shape[2] == 0 || weight_shape[3] == 0 || weight_shape[0] == 0) {
    shape_error("conv2d: zero extent in weights " + shape_string(weight_shape));
  }
  if (weight_shape[2] > in.height + 2 * padding || weight_shape[3] > in.width + 2 * padding) {
    shape_error("conv2d: kernel " + std::to_string(weight_shape[2]) + "x" +
                std::to_string(weight_shape[3]) + " exceeds padded input " +
                std::to_string(in.height + 2 * padding) + "x" +
                std::to_string(in.width + 2 * padding));
  }
  return in;
}

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0 || kernel > input + 2 * padding) {
    throw Error(Errc::shape_mismatch, "conv extent: kernel " + std::to_string(kernel) +
                                          " does not fit input " + std::to_string(input) +
                                          " with padding " + std::to_string(padding));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d_reference(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                std::size_t stride, std::size_t padding, OpCounter* counter) {
  const Shape4 in = check_conv_shapes(input, weights.shape(), stride, padding);
  const std::size_t F = weights.dim(0), KH = weights.dim(2), KW = weights.dim(3);
  const std::size_t OH = conv_output_extent(in.height, KH, stride, padding);
  const std::size_t OW = conv_output_extent(in.width, KW, stride, padding);

  BasicTensor<T> out({in.batch, F, OH, OW});
  std::vector<double> acc(OH * OW);
  const T* x = input.data().data();
  const T* w = weights.data().data();
  std::uint64_t macs = 0;

  for (std::size_t n = 0; n < in.batch; ++n) {
    for (std::size_t f = 0; f < F; ++f) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t c = 0; c < in.channels; ++c) {
        const T* plane = x + (n * in.channels + c) * in.height * in.width;
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const ValidRange rows = valid_range(OH, in.height, kh, stride, padding);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const ValidRange cols = valid_range(OW, in.width, kw, stride, padding);
            const double wv = static_cast<double>(w[((f * in.channels + c) * KH + kh) * KW + kw]);
            for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
              const T* src = plane + (oh * stride + kh - padding) * in.width;
              double* dst = acc.data() + oh * OW;
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) {
                dst[ow] += wv * static_cast<double>(src[ow * stride + kw - padding]);
              }
            }
            macs += (rows.hi - rows.lo) * (cols.hi - cols.lo);
          }
        }
      }
      T* dst = &out.at(n, f, 0, 0);
      for (std::size_t i = 0; i < OH * OW; ++i) dst[i] = static_cast<T>(acc[i]);
    }
  }
  if (counter) {
    counter->inner_multiplies += macs;
    counter->additions += macs;
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_output,
                                     const BasicTensor<T>& weights, const Extents& input_shape,
                                     std::size_t stride, std::size_t padding) {
  const BasicTensor<T> probe(input_shape);  // shape-only view for validation
  const Shape4 in = check_conv_shapes(probe, weights.shape(), stride, padding);
  const std::size_t F = weights.dim(0), KH = weights.dim(2), KW = weights.dim(3);
  const std::size_t OH = conv_output_extent(in.height, KH, stride, padding);
  const std::size_t OW = conv_output_extent(in.width, KW, stride, padding);
  if (grad_output.shape() != Extents{in.batch, F, OH, OW}) {
    shape_error("conv2d backward: upstream gradient " + shape_string(grad_output.shape()) +
                " does not match output " + shape_string({in.batch, F, OH, OW}));
  }

  BasicTensor<T> grad(input_shape);
  std::vector<double> acc(in.height * in.width);
  const T* g = grad_output.data().data();
  const T* w = weights.data().data();
  for (std::size_t n = 0; n < in.batch; ++n) {
    for (std::size_t c = 0; c < in.channels; ++c) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t f = 0; f < F; ++f) {
        const T* gplane = g + (n * F + f) * OH * OW;
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const ValidRange rows = valid_range(OH, in.height, kh, stride, padding);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const ValidRange cols = valid_range(OW, in.width, kw, stride, padding);
            const double wv = static_cast<double>(w[((f * in.channels + c) * KH + kh) * KW + kw]);
            for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
              double* dst = acc.data() + (oh * stride + kh - padding) * in.width;
              const T* src = gplane + oh * OW;
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) {
                dst[ow * stride + kw - padding] += wv * static_cast<double>(src[ow]);
              }
            }
          }
        }
      }
      T* dst = &grad.at(n, c, 0, 0);
      for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
    }
  }
  return grad;
}

template <typename T>
BasicTensor<T> conv2d_backward_weights(const BasicTensor<T>& grad_output,
                                       const BasicTensor<T>& input, const Extents& weight_shape,
                                       std::size_t stride, std::size_t padding) {
  const Shape4 in = check_conv_shapes(input, weight_shape, stride, padding);
  const std::size_t F = weight_shape[0], KH = weight_shape[2], KW = weight_shape[3];
  const std::size_t OH = conv_output_extent(in.height, KH, stride, padding);
  const std::size_t OW = conv_output_extent(in.width, KW, stride, padding);
  if (grad_output.shape() != Extents{in.batch, F, OH, OW}) {
    shape_error("conv2d backward: upstream gradient " + shape_string(grad_output.shape()) +
                " does not match output " + shape_string({in.batch, F, OH, OW}));
  }

  BasicTensor<T> grad(weight_shape);
  const T* g = grad_output.data().data();
  const T* x = input.data().data();
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < in.channels; ++c) {
      for (std::size_t kh = 0; kh < KH; ++kh) {
        const ValidRange rows = valid_range(OH, in.height, kh, stride, padding);
        for (std::size_t kw = 0; kw < KW; ++kw) {
          const ValidRange cols = valid_range(OW, in.width, kw, stride, padding);
          double sum = 0.0;
          for (std::size_t n = 0; n < in.batch; ++n) {
            const T* gplane = g + (n * F + f) * OH * OW;
            const T* xplane = x + (n * in.channels + c) * in.height * in.width;
            for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
              const T* src = xplane + (oh * stride + kh - padding) * in.width;
              const T* gr = gplane + oh * OW;
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) {
                sum += static_cast<double>(gr[ow]) *
                       static_cast<double>(src[ow * stride + kw - padding]);
              }
            }
          }
          grad[((f * in.channels + c) * KH + kh) * KW + kw] = static_cast<T>(sum);
        }
      }
    }
  }
  return grad;
}

template <typename T>
BasicTensor<T> linear_reference(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                const BasicTensor<T>* bias) {
  if (input.rank() != 2 || weights.rank() != 2) {
    shape_error("linear: expected [N,D] input and [K,D] weights, got " +
                shape_string(input.shape()) + " and " + shape_string(weights.shape()));
  }
  const std::size_t N = input.dim(0), D = input.dim(1), K = weights.dim(0);
  if (weights.dim(1) != D) {
    shape_error("linear: input features " + std::to_string(D) + " != weight columns " +
                std::to_string(weights.dim(1)));
  }
  if (bias && bias->shape() != Extents{K}) {
    shape_error("linear: bias shape " + shape_string(bias->shape()) + " != [" +
                std::to_string(K) + "]");
  }
  BasicTensor<T> out({N, K});
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = input.data().data() + n * D;
    for (std::size_t k = 0; k < K; ++k) {
      const T* wrow = weights.data().data() + k * D;
      double sum = bias ? static_cast<double>((*bias)[k]) : 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        sum += static_cast<double>(row[d]) * static_cast<double>(wrow[d]);
      }
      out[n * K + k] = static_cast<T>(sum);
    }
  }
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                               const BasicTensor<T>& weights, bool has_bias) {
  const std::size_t N = input.dim(0), D = input.dim(1), K = weights.dim(0);
  if (grad_output.shape() != Extents{N, K}) {
    shape_error("linear backward: upstream gradient " + shape_string(grad_output.shape()) +
                " != " + shape_string({N, K}));
  }
  LinearGrads<T> grads{BasicTensor<T>({N, D}), BasicTensor<T>({K, D}), {}};
  std::vector<double> acc(D);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double g = static_cast<double>(grad_output[n * K + k]);
      const T* wrow = weights.data().data() + k * D;
      for (std::size_t d = 0; d < D; ++d) acc[d] += g * static_cast<double>(wrow[d]);
    }
    for (std::size_t d = 0; d < D; ++d) grads.input[n * D + d] = static_cast<T>(acc[d]);
  }
  for (std::size_t k = 0; k < K; ++k) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      const double g = static_cast<double>(grad_output[n * K + k]);
      const T* row = input.data().data() + n * D;
      for (std::size_t d = 0; d < D; ++d) acc[d] += g * static_cast<double>(row[d]);
    }
    for (std::size_t d = 0; d < D; ++d) grads.weights[k * D + d] = static_cast<T>(acc[d]);
  }
  if (has_bias) {
    grads.bias = BasicTensor<T>({K});
    for (std::size_t k = 0; k < K; ++k) {
      double sum = 0.0;
      for (std::size_t n = 0; n < N; ++n) sum += static_cast<double>(grad_output[n * K + k]);
      grads.bias[k] = static_cast<T>(sum);
    }
  }
  return grads;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out = x;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& x) {
  check_same_shape(grad_output, x, "relu backward");
  BasicTensor<T> out = grad_output;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > T{0})) out[i] = T{0};
  }
  return out;
}

template <typename T>
BasicTensor<T> prelu(const BasicTensor<T>& x, T slope) {
  BasicTensor<T> out = x;
  for (auto& v : out.data()) {
    if (v < T{0}) v *= slope;
  }
  return out;
}

namespace {

template <typename T>
std::size_t channel_stride(const BasicTensor<T>& x, const BasicTensor<T>& slopes) {
  if (x.rank() < 2 || slopes.rank() != 1 || slopes.dim(0) != x.dim(1)) {
    shape_error("prelu: slopes " + shape_string(slopes.shape()) +
                " do not match channels of " + shape_string(x.shape()));
  }
  std::size_t inner = 1;
  for (std::size_t a = 2; a < x.rank(); ++a) inner *= x.dim(a);
  return inner;
}

}  // namespace

template <typename T>
BasicTensor<T> prelu(const BasicTensor<T>& x, const BasicTensor<T>& slopes) {
  const std::size_t inner = channel_stride(x, slopes);
  const std::size_t C = x.dim(1);
  BasicTensor<T> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < T{0}) out[i] *= slopes[(i / inner) % C];
  }
  return out;
}

template <typename T>
PreluGrads<T> prelu_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& x,
                             const BasicTensor<T>& slopes) {
  check_same_shape(grad_output, x, "prelu backward");
  const std::size_t inner = channel_stride(x, slopes);
  const std::size_t C = x.dim(1);
  PreluGrads<T> grads{grad_output, BasicTensor<T>(slopes.shape())};
  std::vector<double> acc(C, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < T{0}) {
      const std::size_t c = (i / inner) % C;
      acc[c] += static_cast<double>(grad_output[i]) * static_cast<double>(x[i]);
      grads.input[i] = grad_output[i] * slopes[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) grads.slopes[c] = static_cast<T>(acc[c]);
  return grads;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same_shape(a, b, "add");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T k) {
  BasicTensor<T> out = x;
  for (auto& v : out.data()) v *= k;
  return out;
}

template <typename T>
BasicTensor<T> global_average_pool(const BasicTensor<T>& input) {
  const Shape4 in = shape4(input);
  const std::size_t plane = in.height * in.width;
  BasicTensor<T> out({in.batch, in.channels});
  for (std::size_t i = 0; i < in.batch * in.channels; ++i) {
    double sum = 0.0;
    const T* src = input.data().data() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) sum += static_cast<double>(src[j]);
    out[i] = static_cast<T>(sum / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
BasicTensor<T> global_average_pool_backward(const BasicTensor<T>& grad_output,
                                            const Extents& input_shape) {
  if (input_shape.size() != 4 || grad_output.shape() != Extents{input_shape[0], input_shape[1]}) {
    shape_error("global average pool backward: gradient " + shape_string(grad_output.shape()) +
                " vs input " + shape_string(input_shape));
  }
  const std::size_t plane = input_shape[2] * input_shape[3];
  BasicTensor<T> grad(input_shape);
  for (std::size_t i = 0; i < grad_output.size(); ++i) {
    const T g = static_cast<T>(static_cast<double>(grad_output[i]) / static_cast<double>(plane));
    std::fill_n(grad.data().data() + i * plane, plane, g);
  }
  return grad;
}

namespace {

template <typename T>
Shape4 check_max_pool(const BasicTensor<T>& input, std::size_t k) {
  const Shape4 in = shape4(input);
  if (k == 0) throw Error(Errc::invalid_argument, "max pool: kernel must be >= 1");
  if (k > in.height || k > in.width) {
    shape_error("max pool: kernel " + std::to_string(k) + " larger than input " +
                std::to_string(in.height) + "x" + std::to_string(in.width));
  }
  return in;
}

}  // namespace

template <typename T>
BasicTensor<T> max_pool(const BasicTensor<T>& input, std::size_t k) {
  const Shape4 in = check_max_pool(input, k);
  const std::size_t OH = in.height / k, OW = in.width / k;
  BasicTensor<T> out({in.batch, in.channels, OH, OW});
  for (std::size_t n = 0; n < in.batch; ++n)
    for (std::size_t c = 0; c < in.channels; ++c)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          T best = input.at(n, c, oh * k, ow * k);
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) best = std::max(best, input.at(n, c, oh * k + i, ow * k + j));
          out.at(n, c, oh, ow) = best;
        }
  return out;
}

template <typename T>
BasicTensor<T> max_pool_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                                 std::size_t k) {
  const Shape4 in = check_max_pool(input, k);
  const std::size_t OH = in.height / k, OW = in.width / k;
  if (grad_output.shape() != Extents{in.batch, in.channels, OH, OW}) {
    shape_error("max pool backward: gradient " + shape_string(grad_output.shape()));
  }
  BasicTensor<T> grad(input.shape());
  for (std::size_t n = 0; n < in.batch; ++n)
    for (std::size_t c = 0; c < in.channels; ++c)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          // The first maximum in scan order receives the gradient.
          std::size_t bi = 0, bj = 0;
          T best = input.at(n, c, oh * k, ow * k);
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              const T v = input.at(n, c, oh * k + i, ow * k + j);
              if (v > best) {
                best = v;
                bi = i;
                bj = j;
              }
            }
          grad.at(n, c, oh * k + bi, ow * k + bj) += grad_output.at(n, c, oh, ow);
        }
  return grad;
}

namespace {
constexpr double kNormFloor = 1e-12;
}

template <typename T>
BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& x) {
  if (x.rank() != 2) shape_error("l2 normalize: expected [N,D], got " + shape_string(x.shape()));
  const std::size_t N = x.dim(0), D = x.dim(1);
  BasicTensor<T> out(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double sq = 0.0;
    for (std::size_t d = 0; d < D; ++d) sq += static_cast<double>(x[n * D + d]) * x[n * D + d];
    const double norm = std::max(std::sqrt(sq), kNormFloor);
    for (std::size_t d = 0; d < D; ++d) out[n * D + d] = static_cast<T>(x[n * D + d] / norm);
  }
  return out;
}

template <typename T>
BasicTensor<T> l2_normalize_rows_backward(const BasicTensor<T>& grad_output,
                                          const BasicTensor<T>& x) {
  check_same_shape(grad_output, x, "l2 normalize backward");
  const std::size_t N = x.dim(0), D = x.dim(1);
  BasicTensor<T> grad(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double sq = 0.0;
    for (std::size_t d = 0; d < D; ++d) sq += static_cast<double>(x[n * D + d]) * x[n * D + d];
    const double raw = std::sqrt(sq);
    const double norm = std::max(raw, kNormFloor);
    // d(x/|x|) = (g - y <y,g>) / |x|; below the floor the map is x / floor.
    double dot = 0.0;
    if (raw >= kNormFloor) {
      for (std::size_t d = 0; d < D; ++d) {
        dot += (static_cast<double>(x[n * D + d]) / norm) * grad_output[n * D + d];
      }
    }
    for (std::size_t d = 0; d < D; ++d) {
      const double y = static_cast<double>(x[n * D + d]) / norm;
      grad[n * D + d] = static_cast<T>((grad_output[n * D + d] - y * dot) / norm);
    }
  }
  return grad;
}

#define BWN_INSTANTIATE_OPS(T)                                                                  \
  template BasicTensor<T> conv2d_reference(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                           std::size_t, std::size_t, OpCounter*);               \
  template BasicTensor<T> conv2d_backward_input(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                const Extents&, std::size_t, std::size_t);      \
  template BasicTensor<T> conv2d_backward_weights(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                  const Extents&, std::size_t, std::size_t);    \
  template BasicTensor<T> linear_reference(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                           const BasicTensor<T>*);                              \
  template LinearGrads<T> linear_backward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                          const BasicTensor<T>&, bool);                         \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                          \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> prelu(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> prelu(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template PreluGrads<T> prelu_backward(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                        const BasicTensor<T>&);                                 \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> global_average_pool(const BasicTensor<T>&);                           \
  template BasicTensor<T> global_average_pool_backward(const BasicTensor<T>&, const Extents&);  \
  template BasicTensor<T> max_pool(const BasicTensor<T>&, std::size_t);                         \
  template BasicTensor<T> max_pool_backward(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                            std::size_t);                                       \
  template BasicTensor<T> l2_normalize_rows(const BasicTensor<T>&);                             \
  template BasicTensor<T> l2_normalize_rows_backward(const BasicTensor<T>&, const BasicTensor<T>&);

BWN_INSTANTIATE_OPS(float)
BWN_INSTANTIATE_OPS(double)

#undef BWN_INSTANTIATE_OPS

}  // namespace bwn
