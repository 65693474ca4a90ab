#include "bwn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bwn/error.hpp"
#include "bwn/rng.hpp"

namespace bwn {

std::string_view gradient_rule_name(GradientRule rule) noexcept {
  return rule == GradientRule::scaled_ste ? "scaled_ste" : "pass_through";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::config, what); };
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail("lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) fail("decay_factor must lie in (0, 1]");
  if (decay_every == 0) fail("decay_every must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(clip_threshold > 0.0)) fail("clip_threshold must be > 0");
}

TrainState make_train_state(const Model& model, const TrainConfig& config, std::uint64_t seed) {
  check_model(model);
  if (!model.has_dense_weights()) {
    throw Error(Errc::invalid_argument, "training needs full-precision weights");
  }
  TrainState state;
  state.weights = model.weights;
  for (const Tensor& w : state.weights) state.momentum.emplace_back(w.shape());
  state.learning_rate = config.lr0;
  state.rng_seed = seed;
  return state;
}

Model trained_model(const NetworkSpec& spec, const TrainState& state) {
  Model model;
  model.spec = spec;
  model.weights = state.weights;
  binarize_model(model);
  return model;
}

LossResult cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) == 0) {
    throw Error(Errc::shape_mismatch, "cross_entropy_loss: logits must be [N,K], got " +
                                          shape_string(logits.shape()));
  }
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != N) {
    throw Error(Errc::shape_mismatch, "cross_entropy_loss: " + std::to_string(labels.size()) +
                                          " labels for " + std::to_string(N) + " rows");
  }
  LossResult r;
  r.grad_logits = Tensor(logits.shape());
  double total = 0.0;
  std::vector<double> p(K);
  for (std::size_t n = 0; n < N; ++n) {
    if (labels[n] >= K) {
      throw Error(Errc::out_of_range, "cross_entropy_loss: label " + std::to_string(labels[n]) +
                                          " at row " + std::to_string(n) + " not in [0, " +
                                          std::to_string(K) + ")");
    }
    const float* z = logits.data().data() + n * K;
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(static_cast<double>(z[k]) - zmax);
      sum += p[k];
    }
    total += std::log(sum) - (static_cast<double>(z[labels[n]]) - zmax);
    for (std::size_t k = 0; k < K; ++k) {
      const double onehot = k == labels[n] ? 1.0 : 0.0;
      r.grad_logits[n * K + k] = static_cast<float>((p[k] / sum - onehot) / static_cast<double>(N));
    }
  }
  r.loss = total / static_cast<double>(N);
  return r;
}

Tensor ste_gradient(const Tensor& upstream, const Tensor& preimage, double threshold) {
  if (upstream.shape() != preimage.shape()) {
    throw Error(Errc::shape_mismatch, "ste_gradient: upstream " +
                                          shape_string(upstream.shape()) + " vs preimage " +
                                          shape_string(preimage.shape()));
  }
  Tensor out(upstream.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::fabs(static_cast<double>(preimage[i])) <= threshold ? upstream[i] : 0.0f;
  }
  return out;
}

Tensor shadow_gradient(const Tensor& raw, const Tensor& shadow, std::span<const float> scales,
                       double threshold, GradientRule rule) {
  if (raw.shape() != shadow.shape() || shadow.rank() < 1 || shadow.empty()) {
    throw Error(Errc::shape_mismatch, "shadow_gradient: raw " + shape_string(raw.shape()) +
                                          " vs shadow " + shape_string(shadow.shape()));
  }
  const std::size_t F = shadow.dim(0);
  const std::size_t n = shadow.size() / F;
  if (scales.size() != F) {
    throw Error(Errc::shape_mismatch, "shadow_gradient: " + std::to_string(scales.size()) +
                                          " scales for " + std::to_string(F) + " filters");
  }
  const Tensor passed = ste_gradient(raw, shadow, threshold);
  Tensor out(shadow.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t f = 0; f < F; ++f) {
    const double a = scales[f];
    for (std::size_t i = f * n; i < (f + 1) * n; ++i) {
      if (rule == GradientRule::pass_through) {
        out[i] = passed[i];
      } else {
        out[i] = static_cast<float>(static_cast<double>(raw[i]) * inv_n +
                                    static_cast<double>(passed[i]) * a);
      }
    }
  }
  return out;
}

BinaryLayerGrads backward_binary_layer(const LayerSpec& layer, const Tensor& shadow,
                                       const Tensor* cached_input, const Tensor& grad_output,
                                       double threshold, GradientRule rule) {
  if (cached_input == nullptr || cached_input->empty()) {
    throw Error(Errc::missing_cache, "backward_binary_layer: no cached input from forward pass");
  }
  if (!layer.binarized()) {
    throw Error(Errc::invalid_argument, "backward_binary_layer: layer kind " +
                                            std::string(layer_kind_name(layer.kind)) +
                                            " is not binarized");
  }
  const BinaryFilterBank bank = binarize_bank(shadow);
  const Tensor w_tilde = expand(bank);
  BinaryLayerGrads g;
  g.input = conv2d_backward_input(grad_output, w_tilde, cached_input->shape(), layer.stride,
                                  layer.padding);
  g.raw_weights = conv2d_backward_weights(grad_output, *cached_input, shadow.shape(),
                                          layer.stride, layer.padding);
  g.shadow = shadow_gradient(g.raw_weights, shadow, bank.scales(), threshold, rule);
  return g;
}

void sgd_momentum_step(TrainState& state, std::span<const Tensor> grads, double momentum) {
  if (grads.size() != state.weights.size() || state.momentum.size() != state.weights.size()) {
    throw Error(Errc::shape_mismatch, "sgd_momentum_step: " + std::to_string(grads.size()) +
                                          " gradients for " +
                                          std::to_string(state.weights.size()) + " parameters");
  }
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (grads[p].shape() != state.weights[p].shape() ||
        state.momentum[p].shape() != state.weights[p].shape()) {
      throw Error(Errc::shape_mismatch, "sgd_momentum_step: parameter " + std::to_string(p) +
                                            " has shape " +
                                            shape_string(state.weights[p].shape()) +
                                            ", gradient " + shape_string(grads[p].shape()));
    }
  }
  const float mu = static_cast<float>(momentum);
  const float lr = static_cast<float>(state.learning_rate);
  for (std::size_t p = 0; p < grads.size(); ++p) {
    auto w = state.weights[p].data();
    auto v = state.momentum[p].data();
    auto g = grads[p].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      w[i] -= lr * v[i];
    }
  }
  ++state.step;
}

double lr_schedule(std::size_t epoch, double lr0, double decay_factor, std::size_t decay_every) {
  if (decay_every == 0) throw Error(Errc::invalid_argument, "lr_schedule: decay_every is 0");
  double lr = lr0;
  for (std::size_t k = epoch / decay_every; k > 0; --k) lr *= decay_factor;
  return lr;
}

double classification_accuracy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw Error(Errc::shape_mismatch, "classification_accuracy: logits " +
                                          shape_string(logits.shape()) + " for " +
                                          std::to_string(labels.size()) + " labels");
  }
  const std::size_t K = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const float* z = logits.data().data() + n * K;
    if (static_cast<std::size_t>(std::max_element(z, z + K) - z) == labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

StepResult train_step(TrainState& state, const NetworkSpec& spec, const Tensor& inputs,
                      std::span<const std::size_t> labels, const TrainConfig& config,
                      StepTrace* trace) {
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  if (state.weights.size() != layout.size()) {
    throw Error(Errc::shape_mismatch, "train_step: state has " +
                                          std::to_string(state.weights.size()) +
                                          " parameters, layout has " +
                                          std::to_string(layout.size()));
  }
  auto phase = [&](const char* name) {
    if (trace) trace->phases.emplace_back(name);
  };

  std::vector<ParamRef<float>> refs(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) refs[i].dense = &state.weights[i];
  ForwardTrace<float> fwd;
  phase("forward");
  const NetworkOutput<float> out =
      run_network<float>(spec, refs, inputs, &fwd, trace ? &trace->forward_ops : nullptr);

  phase("loss");
  LossResult loss = cross_entropy_loss(out.logits, labels);
  if (!std::isfinite(loss.loss)) {
    throw Error(Errc::numeric, "non-finite loss at step " + std::to_string(state.step));
  }

  phase("binarize");
  std::vector<Tensor> effective = state.weights;
  std::vector<BinaryFilterBank> banks(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!layout[i].binarizable) continue;
    banks[i] = binarize_bank(state.weights[i]);
    effective[i] = expand(banks[i]);
  }

  phase("backward");
  NetworkGrads<float> grads = backprop_network<float>(spec, effective, fwd, loss.grad_logits);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!layout[i].binarizable) continue;
    grads.params[i] = shadow_gradient(grads.params[i], state.weights[i], banks[i].scales(),
                                      config.clip_threshold, config.gradient_rule);
  }

  phase("update");
  sgd_momentum_step(state, grads.params, config.momentum);
  if (config.clip_shadow) {
    const float c = static_cast<float>(config.clip_threshold);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (!layout[i].binarizable) continue;
      for (float& v : state.weights[i].data()) v = std::clamp(v, -c, c);
    }
  }

  StepResult r;
  r.loss = loss.loss;
  r.correct = static_cast<std::size_t>(
      std::lround(classification_accuracy(out.logits, labels) * static_cast<double>(labels.size())));
  return r;
}

EpochMetrics train_epoch(TrainState& state, const NetworkSpec& spec, const Dataset& data,
                         const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw Error(Errc::invalid_argument, "train_epoch: empty dataset");
  const Shape4 s = shape4(data.inputs);
  if (s.batch != data.size()) {
    throw Error(Errc::shape_mismatch, "train_epoch: " + std::to_string(s.batch) + " inputs, " +
                                          std::to_string(data.size()) + " labels");
  }

  state.learning_rate =
      lr_schedule(state.epoch, config.lr0, config.decay_factor, config.decay_every);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(state.rng_seed, "shuffle"), state.epoch));
  rng.shuffle(order.begin(), order.end());

  const std::size_t sample = s.channels * s.height * s.width;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t count = std::min(config.batch_size, order.size() - start);
    Tensor batch({count, s.channels, s.height, s.width});
    std::vector<std::size_t> labels(count);
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t idx = order[start + b];
      std::copy_n(data.inputs.data().begin() + static_cast<std::ptrdiff_t>(idx * sample), sample,
                  batch.data().begin() + static_cast<std::ptrdiff_t>(b * sample));
      labels[b] = data.labels[idx];
    }
    const StepResult r = train_step(state, spec, batch, labels, config);
    loss_sum += r.loss * static_cast<double>(count);
    correct += r.correct;
  }

  EpochMetrics m;
  m.epoch = state.epoch;
  m.learning_rate = state.learning_rate;
  m.loss = loss_sum / static_cast<double>(data.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  ++state.epoch;
  return m;
}

}  // namespace bwn
