#pragma once

#include <cstddef>
#include <cstdint>

#include "bwn/tensor.hpp"

namespace bwn {

/// Arithmetic tally kept by the convolution kernels. The reference kernel
/// counts one inner multiply per multiply-accumulate; the binary kernel only
/// ever adds to `additions` and `scale_multiplies`.
struct OpCounter {
  std::uint64_t inner_multiplies = 0;
  std::uint64_t additions = 0;
  std::uint64_t scale_multiplies = 0;
};

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

// Reference (multiply-accumulate) kernels. Cross-correlation convention, no
// kernel flip. Accumulation is carried out in double.

/// input [N,C,H,W], weights [F,C,kh,kw] -> [N,F,H',W'].
template <typename T>
BasicTensor<T> conv2d_reference(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                std::size_t stride, std::size_t padding,
                                OpCounter* counter = nullptr);

/// Gradient of conv2d_reference with respect to its input.
template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_output,
                                     const BasicTensor<T>& weights, const Extents& input_shape,
                                     std::size_t stride, std::size_t padding);

/// Gradient of conv2d_reference with respect to its weights.
template <typename T>
BasicTensor<T> conv2d_backward_weights(const BasicTensor<T>& grad_output,
                                       const BasicTensor<T>& input, const Extents& weight_shape,
                                       std::size_t stride, std::size_t padding);

/// input [N,D], weights [K,D], optional bias [K] -> [N,K].
template <typename T>
BasicTensor<T> linear_reference(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                const BasicTensor<T>* bias = nullptr);

template <typename T>
struct LinearGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;  // empty when the layer has no bias
};

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                               const BasicTensor<T>& weights, bool has_bias);

// Elementwise.

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& x);

/// x if x >= 0, slope * x otherwise.
template <typename T>
BasicTensor<T> prelu(const BasicTensor<T>& x, T slope);

/// Channel-wise PReLU on an [N,C,...] tensor with slopes [C].
template <typename T>
BasicTensor<T> prelu(const BasicTensor<T>& x, const BasicTensor<T>& slopes);

template <typename T>
struct PreluGrads {
  BasicTensor<T> input;
  BasicTensor<T> slopes;
};

template <typename T>
PreluGrads<T> prelu_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& x,
                             const BasicTensor<T>& slopes);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T k);

// Pooling.

/// [N,C,H,W] -> [N,C]: one mean per (batch, channel).
template <typename T>
BasicTensor<T> global_average_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_average_pool_backward(const BasicTensor<T>& grad_output,
                                            const Extents& input_shape);

/// Non-overlapping k x k max pooling (stride k, floor on the borders).
template <typename T>
BasicTensor<T> max_pool(const BasicTensor<T>& input, std::size_t k);

template <typename T>
BasicTensor<T> max_pool_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& input,
                                 std::size_t k);

// Row-wise L2 normalisation of an [N,D] tensor.

template <typename T>
BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> l2_normalize_rows_backward(const BasicTensor<T>& grad_output,
                                          const BasicTensor<T>& x);

}  // namespace bwn
