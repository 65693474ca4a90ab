#include "bwn/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bwn/error.hpp"
#include "bwn/rng.hpp"

namespace bwn {

bool Model::has_dense_weights() const noexcept {
  if (weights.empty()) return false;
  for (const Tensor& w : weights) {
    if (w.empty()) return false;
  }
  return true;
}

Model init_model(const NetworkSpec& spec, std::uint64_t seed) {
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  Model model;
  model.spec = spec;
  model.banks.resize(layout.size());
  Rng rng(derive_seed(seed, "init"));
  for (const ParamInfo& p : layout) {
    Tensor t(p.shape);
    switch (p.role) {
      case ParamRole::weight: {
        // The classifier sees unit-length embeddings, so its rows start at
        // a norm that lets logits separate before the embedding has formed.
        const bool classifier = p.layer == spec.layers.size();
        const double b = classifier ? 1.0 : std::sqrt(1.0 / static_cast<double>(p.fan_in));
        for (float& v : t.data()) v = static_cast<float>(rng.uniform(-b, b));
        break;
      }
      case ParamRole::bias:
        break;
      case ParamRole::slope:
        for (float& v : t.data()) v = spec.layers[p.layer].slope;
        break;
    }
    model.weights.push_back(std::move(t));
  }
  return model;
}

void check_model(const Model& model) {
  const std::vector<ParamInfo> layout = parameter_layout(model.spec);
  if (model.banks.size() != layout.size()) {
    throw Error(Errc::shape_mismatch, "model has " + std::to_string(model.banks.size()) +
                                          " bank slots, layout has " +
                                          std::to_string(layout.size()) + " parameters");
  }
  if (!model.weights.empty() && model.weights.size() != layout.size()) {
    throw Error(Errc::shape_mismatch, "model has " + std::to_string(model.weights.size()) +
                                          " weight tensors, layout has " +
                                          std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const ParamInfo& p = layout[i];
    const bool dense = !model.weights.empty() && !model.weights[i].empty();
    if (dense && model.weights[i].shape() != p.shape) {
      throw Error(Errc::shape_mismatch, p.name + ": weights " +
                                            shape_string(model.weights[i].shape()) +
                                            ", expected " + shape_string(p.shape));
    }
    if (model.banks[i]) {
      if (!p.binarizable) {
        throw Error(Errc::invalid_argument, p.name + " is not binarizable but has a bank");
      }
      if (model.banks[i]->weight_shape() != p.shape) {
        throw Error(Errc::shape_mismatch, p.name + ": bank " +
                                              shape_string(model.banks[i]->weight_shape()) +
                                              ", expected " + shape_string(p.shape));
      }
    } else if (!dense) {
      throw Error(Errc::invalid_argument, p.name + " has neither weights nor a bank");
    }
  }
}

void binarize_model(Model& model) {
  const std::vector<ParamInfo> layout = parameter_layout(model.spec);
  if (!model.has_dense_weights() || model.weights.size() != layout.size()) {
    throw Error(Errc::invalid_argument, "binarize_model: model has no dense weights");
  }
  model.banks.assign(layout.size(), std::nullopt);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].binarizable) model.banks[i] = binarize_bank(model.weights[i]);
  }
}

namespace {

template <typename T>
BasicTensor<T> conv(const BasicTensor<T>& x, const ParamRef<T>& p, std::size_t stride,
                    std::size_t padding, OpCounter* counter) {
  if (p.bank) return binary_conv2d_forward(x, *p.bank, stride, padding, counter);
  return conv2d_reference(x, *p.dense, stride, padding, counter);
}

template <typename T>
const BasicTensor<T>& dense_of(const ParamRef<T>& p, const std::string& what) {
  if (!p.dense) throw Error(Errc::invalid_argument, what + " needs dense parameters");
  return *p.dense;
}

}  // namespace

template <typename T>
NetworkOutput<T> run_network(const NetworkSpec& spec, std::span<const ParamRef<T>> params,
                             const BasicTensor<T>& input, ForwardTrace<T>* trace,
                             OpCounter* counter) {
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  if (params.size() != layout.size()) {
    throw Error(Errc::shape_mismatch, "run_network: " + std::to_string(params.size()) +
                                          " parameters, layout has " +
                                          std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const ParamRef<T>& p = params[i];
    if ((p.dense == nullptr) == (p.bank == nullptr)) {
      throw Error(Errc::invalid_argument,
                  layout[i].name + ": exactly one of dense weights or bank must be given");
    }
    if (p.bank && !layout[i].binarizable) {
      throw Error(Errc::invalid_argument, layout[i].name + " cannot run from a bank");
    }
    const Extents got = p.bank ? p.bank->weight_shape() : p.dense->shape();
    if (got != layout[i].shape) {
      throw Error(Errc::shape_mismatch, layout[i].name + ": " + shape_string(got) +
                                            ", expected " + shape_string(layout[i].shape));
    }
  }
  if (input.rank() != spec.input_shape.size() + 1 || input.dim(0) == 0 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), input.shape().begin() + 1)) {
    throw Error(Errc::shape_mismatch, "run_network: input " + shape_string(input.shape()) +
                                          " does not match [N]+" +
                                          shape_string(spec.input_shape));
  }

  if (trace) trace->layers.assign(spec.layers.size(), LayerCache<T>{});
  const std::size_t N = input.dim(0);
  BasicTensor<T> x = input;
  std::size_t k = 0;  // parameter cursor
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (trace) trace->layers[i].input = x;
    switch (layer.kind) {
      case LayerKind::binary_conv2d:
      case LayerKind::float_conv2d:
        x = conv(x, params[k++], layer.stride, layer.padding, counter);
        break;
      case LayerKind::residual_block: {
        const std::size_t in_channels = x.dim(1);
        BasicTensor<T> z1 = conv(x, params[k], layer.stride, 1, counter);
        BasicTensor<T> a1;
        const bool projection = residual_has_projection(layer, in_channels);
        const std::size_t slope_index = k + 2 + (projection ? 1 : 0);
        if (layer.activation == Activation::relu) {
          a1 = relu(z1);
        } else {
          a1 = prelu(z1, dense_of(params[slope_index], where));
        }
        BasicTensor<T> out = conv(a1, params[k + 1], 1, 1, counter);
        if (projection) {
          out = add(out, conv2d_reference(x, dense_of(params[k + 2], where), layer.stride, 0,
                                          counter));
        } else {
          out = add(out, x);
        }
        k = slope_index + (layer.activation == Activation::prelu ? 1 : 0);
        if (trace) {
          trace->layers[i].inner_pre = std::move(z1);
          trace->layers[i].inner_post = std::move(a1);
        }
        x = std::move(out);
        break;
      }
      case LayerKind::linear: {
        const BasicTensor<T>& w = dense_of(params[k++], where);
        const BasicTensor<T>* b = layer.bias ? &dense_of(params[k++], where) : nullptr;
        x = linear_reference(x, w, b);
        break;
      }
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::prelu:
        x = prelu(x, dense_of(params[k++], where));
        break;
      case LayerKind::pool:
        x = layer.pool == PoolKind::global_average ? global_average_pool(x)
                                                    : max_pool(x, layer.pool_size);
        break;
      case LayerKind::flatten:
        x = x.reshaped({N, x.size() / N});
        break;
    }
  }

  NetworkOutput<T> out;
  out.embedding = l2_normalize_rows(x);
  out.logits = linear_reference(out.embedding, dense_of(params[k], "classifier"),
                                &dense_of(params[k + 1], "classifier"));
  if (trace) {
    trace->features = std::move(x);
    trace->embedding = out.embedding;
  }
  return out;
}

template <typename T>
NetworkGrads<T> backprop_network(const NetworkSpec& spec, std::span<const BasicTensor<T>> weights,
                                 const ForwardTrace<T>& trace, const BasicTensor<T>& grad_logits) {
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  if (weights.size() != layout.size()) {
    throw Error(Errc::shape_mismatch, "backprop_network: " + std::to_string(weights.size()) +
                                          " weights, layout has " +
                                          std::to_string(layout.size()));
  }
  if (trace.layers.size() != spec.layers.size() || trace.embedding.empty()) {
    throw Error(Errc::missing_cache, "backprop_network: no forward trace recorded");
  }

  // First parameter index of every layer.
  std::vector<std::size_t> first(spec.layers.size() + 1, layout.size());
  for (std::size_t p = layout.size(); p-- > 0;) first[layout[p].layer] = p;

  NetworkGrads<T> grads;
  grads.params.resize(layout.size());
  const std::size_t cls = first[spec.layers.size()];
  LinearGrads<T> lg = linear_backward(grad_logits, trace.embedding, weights[cls], true);
  grads.params[cls] = std::move(lg.weights);
  grads.params[cls + 1] = std::move(lg.bias);
  BasicTensor<T> g = l2_normalize_rows_backward(lg.input, trace.features);

  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const LayerSpec& layer = spec.layers[i];
    const LayerCache<T>& cache = trace.layers[i];
    const BasicTensor<T>& x = cache.input;
    if (x.empty()) {
      throw Error(Errc::missing_cache, "backprop_network: layer " + std::to_string(i) +
                                           " has no cached input");
    }
    const std::size_t k = first[i];
    switch (layer.kind) {
      case LayerKind::binary_conv2d:
      case LayerKind::float_conv2d:
        grads.params[k] =
            conv2d_backward_weights(g, x, weights[k].shape(), layer.stride, layer.padding);
        g = conv2d_backward_input(g, weights[k], x.shape(), layer.stride, layer.padding);
        break;
      case LayerKind::residual_block: {
        if (cache.inner_pre.empty() || cache.inner_post.empty()) {
          throw Error(Errc::missing_cache, "backprop_network: residual block " +
                                               std::to_string(i) + " has no inner cache");
        }
        const bool projection = residual_has_projection(layer, x.dim(1));
        const std::size_t slope_index = k + 2 + (projection ? 1 : 0);
        grads.params[k + 1] =
            conv2d_backward_weights(g, cache.inner_post, weights[k + 1].shape(), 1, 1);
        BasicTensor<T> ga = conv2d_backward_input(g, weights[k + 1], cache.inner_post.shape(), 1, 1);
        BasicTensor<T> gz;
        if (layer.activation == Activation::relu) {
          gz = relu_backward(ga, cache.inner_pre);
        } else {
          PreluGrads<T> pg = prelu_backward(ga, cache.inner_pre, weights[slope_index]);
          gz = std::move(pg.input);
          grads.params[slope_index] = std::move(pg.slopes);
        }
        grads.params[k] = conv2d_backward_weights(gz, x, weights[k].shape(), layer.stride, 1);
        BasicTensor<T> gx = conv2d_backward_input(gz, weights[k], x.shape(), layer.stride, 1);
        if (projection) {
          grads.params[k + 2] =
              conv2d_backward_weights(g, x, weights[k + 2].shape(), layer.stride, 0);
          gx = add(gx, conv2d_backward_input(g, weights[k + 2], x.shape(), layer.stride, 0));
        } else {
          gx = add(gx, g);
        }
        g = std::move(gx);
        break;
      }
      case LayerKind::linear: {
        LinearGrads<T> l = linear_backward(g, x, weights[k], layer.bias);
        grads.params[k] = std::move(l.weights);
        if (layer.bias) grads.params[k + 1] = std::move(l.bias);
        g = std::move(l.input);
        break;
      }
      case LayerKind::relu:
        g = relu_backward(g, x);
        break;
      case LayerKind::prelu: {
        PreluGrads<T> pg = prelu_backward(g, x, weights[k]);
        grads.params[k] = std::move(pg.slopes);
        g = std::move(pg.input);
        break;
      }
      case LayerKind::pool:
        g = layer.pool == PoolKind::global_average ? global_average_pool_backward(g, x.shape())
                                                    : max_pool_backward(g, x, layer.pool_size);
        break;
      case LayerKind::flatten:
        g = g.reshaped(x.shape());
        break;
    }
  }
  grads.input = std::move(g);
  return grads;
}

NetworkOutput<float> forward_network(const Model& model, const Tensor& input, ForwardMode mode,
                                     OpCounter* counter) {
  const std::vector<ParamInfo> layout = parameter_layout(model.spec);
  const bool dense = model.has_dense_weights() && model.weights.size() == layout.size();
  std::vector<ParamRef<float>> refs(layout.size());
  std::vector<BinaryFilterBank> scratch;  // banks binarised on the fly
  scratch.reserve(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const bool has_bank = i < model.banks.size() && model.banks[i].has_value();
    if (mode == ForwardMode::binary && layout[i].binarizable) {
      if (has_bank) {
        refs[i].bank = &*model.banks[i];
      } else if (dense) {
        scratch.push_back(binarize_bank(model.weights[i]));
        refs[i].bank = &scratch.back();
      } else {
        throw Error(Errc::invalid_argument, layout[i].name + " has neither bank nor weights");
      }
    } else {
      if (model.weights.size() != layout.size() || model.weights[i].empty()) {
        throw Error(Errc::invalid_argument,
                    layout[i].name + " has no dense weights for a " +
                        (mode == ForwardMode::binary ? "binary" : "full-precision") +
                        " forward pass");
      }
      refs[i].dense = &model.weights[i];
    }
  }
  return run_network<float>(model.spec, refs, input, nullptr, counter);
}

#define BWN_INSTANTIATE_NETWORK(T)                                                              \
  template NetworkOutput<T> run_network(const NetworkSpec&, std::span<const ParamRef<T>>,       \
                                        const BasicTensor<T>&, ForwardTrace<T>*, OpCounter*);   \
  template NetworkGrads<T> backprop_network(const NetworkSpec&, std::span<const BasicTensor<T>>, \
                                            const ForwardTrace<T>&, const BasicTensor<T>&);

BWN_INSTANTIATE_NETWORK(float)
BWN_INSTANTIATE_NETWORK(double)

}  // namespace bwn
