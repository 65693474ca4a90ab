#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bwn/binarization.hpp"
#include "bwn/layers.hpp"
#include "bwn/ops.hpp"
#include "bwn/tensor.hpp"

namespace bwn {

enum class ForwardMode {
  train_fullprec,  // every layer on the full-precision (shadow) weights
  binary,          // binarised layers run the multiplication-free kernel on their banks
};

/// A network specification with its parameters, indexed like
/// parameter_layout(spec). A parameter may hold dense weights, a bank, or
/// both; models loaded from a packed file carry banks only.
struct Model {
  NetworkSpec spec;
  std::vector<Tensor> weights;
  std::vector<std::optional<BinaryFilterBank>> banks;

  bool has_dense_weights() const noexcept;
};

/// Uniform [-b, b] with b = sqrt(1 / fan_in) for frontend weights and b = 1
/// for the classifier, zero biases and the layer's initial slope for PReLU.
Model init_model(const NetworkSpec& spec, std::uint64_t seed);

/// Throws unless the parameter containers match the spec's layout.
void check_model(const Model& model);

/// Fills the bank of every binarizable parameter from its dense weights.
void binarize_model(Model& model);

template <typename T>
struct NetworkOutput {
  BasicTensor<T> embedding;  // [N, embedding_dim], unit L2 norm per row
  BasicTensor<T> logits;     // [N, num_classes]
};

/// Throws invalid_argument on a mode/parameter mismatch, e.g. a full
/// precision forward of a model that only has banks.
NetworkOutput<float> forward_network(const Model& model, const Tensor& input, ForwardMode mode,
                                     OpCounter* counter = nullptr);

// Lower-level execution shared by training and gradient checks.

/// Exactly one of dense or bank is set; banks are only valid for
/// binarizable parameters.
template <typename T>
struct ParamRef {
  const BasicTensor<T>* dense = nullptr;
  const BinaryFilterBank* bank = nullptr;
};

template <typename T>
struct LayerCache {
  BasicTensor<T> input;
  BasicTensor<T> inner_pre;   // residual block: first conv output
  BasicTensor<T> inner_post;  // residual block: activation of inner_pre
};

template <typename T>
struct ForwardTrace {
  std::vector<LayerCache<T>> layers;
  BasicTensor<T> features;   // frontend output before normalisation
  BasicTensor<T> embedding;  // normalised features (classifier input)
};

template <typename T>
NetworkOutput<T> run_network(const NetworkSpec& spec, std::span<const ParamRef<T>> params,
                             const BasicTensor<T>& input, ForwardTrace<T>* trace = nullptr,
                             OpCounter* counter = nullptr);

template <typename T>
struct NetworkGrads {
  std::vector<BasicTensor<T>> params;  // gradient per parameter, layout order
  BasicTensor<T> input;
};

/// Backpropagates grad_logits through the network recorded in `trace`.
/// `weights` supplies the dense weights the gradients are computed against;
/// for binarised layers the caller passes aB rather than the shadow weights.
template <typename T>
NetworkGrads<T> backprop_network(const NetworkSpec& spec, std::span<const BasicTensor<T>> weights,
                                 const ForwardTrace<T>& trace, const BasicTensor<T>& grad_logits);

}  // namespace bwn
