#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bwn/binarization.hpp"
#include "bwn/layers.hpp"
#include "bwn/network.hpp"
#include "bwn/ops.hpp"
#include "bwn/tensor.hpp"

namespace bwn {

enum class GradientRule {
  scaled_ste,    // g * (1/n + 1{|W| <= clip} * a)
  pass_through,  // g * 1{|W| <= clip}
};

std::string_view gradient_rule_name(GradientRule rule) noexcept;

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.95;
  double decay_factor = 0.1;
  std::size_t decay_every = 10;  // epochs
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  double clip_threshold = 1.0;
  GradientRule gradient_rule = GradientRule::scaled_ste;
  bool clip_shadow = false;  // hard-clip binarizable shadows after each update

  /// Throws config on lr0 <= 0, momentum outside [0, 1) and similar.
  void validate() const;
};

struct TrainState {
  std::vector<Tensor> weights;   // full-precision shadows, parameter_layout order
  std::vector<Tensor> momentum;  // same shapes, zero at start
  double learning_rate = 0.0;
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t rng_seed = 0;
};

TrainState make_train_state(const Model& model, const TrainConfig& config, std::uint64_t seed);

/// Shadows plus freshly binarised banks, ready for saving or binary inference.
Model trained_model(const NetworkSpec& spec, const TrainState& state);

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;
};

/// Mean softmax cross-entropy; grad = (softmax - onehot) / N.
LossResult cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> labels);

/// Passes upstream through where |preimage| <= threshold, zero elsewhere.
Tensor ste_gradient(const Tensor& upstream, const Tensor& preimage, double threshold = 1.0);

/// Turns the raw gradient with respect to W~ = aB into the gradient applied to
/// the shadow weights, filter by filter (axis 0).
Tensor shadow_gradient(const Tensor& raw, const Tensor& shadow, std::span<const float> scales,
                       double threshold, GradientRule rule);

struct BinaryLayerGrads {
  Tensor input;
  Tensor raw_weights;  // dC/dW~
  Tensor shadow;       // dC/dW after the straight-through correction
};

/// Backward pass of one binary convolution layer: input and raw weight
/// gradients are taken against W~ = aB of the current shadows. Throws
/// missing_cache when `cached_input` is null or empty.
BinaryLayerGrads backward_binary_layer(const LayerSpec& layer, const Tensor& shadow,
                                       const Tensor* cached_input, const Tensor& grad_output,
                                       double threshold = 1.0,
                                       GradientRule rule = GradientRule::scaled_ste);

/// v = momentum * v + g; W -= lr * v. Increments state.step.
void sgd_momentum_step(TrainState& state, std::span<const Tensor> grads, double momentum);

/// lr0 * decay_factor^floor(epoch / decay_every), applied as repeated
/// multiplication so lr_schedule(10) == 0.01 * 0.1 exactly.
double lr_schedule(std::size_t epoch, double lr0, double decay_factor = 0.1,
                   std::size_t decay_every = 10);

struct Dataset {
  Tensor inputs;                    // [N, C, H, W]
  std::vector<std::size_t> labels;  // [N]

  std::size_t size() const noexcept { return labels.size(); }
};
/// Phase log of one training step, used to check the ordering: forward on
/// shadows, loss, binarise, backward, update.
struct StepTrace {
  std::vector<std::string> phases;
  OpCounter forward_ops;  // scale_multiplies stays 0 for a full-precision forward
};

struct StepResult {
  double loss = 0.0;
  std::size_t correct = 0;
};

StepResult train_step(TrainState& state, const NetworkSpec& spec, const Tensor& inputs,
                      std::span<const std::size_t> labels, const TrainConfig& config,
                      StepTrace* trace = nullptr);

struct EpochMetrics {
  std::size_t epoch = 0;  // zero based
  double learning_rate = 0.0;
  double loss = 0.0;      // sample-weighted mean over the epoch
  double accuracy = 0.0;  // running training accuracy
};

/// One pass over a freshly shuffled copy of the dataset. The learning rate is
/// set from the schedule first and state.epoch advances at the end. Throws
/// numeric on a non-finite loss and invalid_argument on an empty dataset.
EpochMetrics train_epoch(TrainState& state, const NetworkSpec& spec, const Dataset& data,
                         const TrainConfig& config);

/// Fraction of samples whose argmax logit equals the label.
double classification_accuracy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace bwn
