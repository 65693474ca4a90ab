#include "bwn/layers.hpp"

#include <algorithm>

#include "bwn/error.hpp"
#include "conv_geometry.hpp"

namespace bwn {

std::string_view layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::binary_conv2d: return "binary_conv2d";
    case LayerKind::float_conv2d: return "float_conv2d";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::prelu: return "prelu";
    case LayerKind::residual_block: return "residual_block";
    case LayerKind::pool: return "pool";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

std::string_view activation_name(Activation a) noexcept {
  return a == Activation::relu ? "relu" : "prelu";
}

LayerSpec LayerSpec::binary_conv2d(std::size_t filters, std::size_t kernel, std::size_t stride,
                                   std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::binary_conv2d;
  s.filters = filters;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::float_conv2d(std::size_t filters, std::size_t kernel, std::size_t stride,
                                  std::size_t padding) {
  LayerSpec s = binary_conv2d(filters, kernel, stride, padding);
  s.kind = LayerKind::float_conv2d;
  return s;
}

LayerSpec LayerSpec::linear(std::size_t out_features, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::linear;
  s.filters = out_features;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::prelu(float slope) {
  LayerSpec s;
  s.kind = LayerKind::prelu;
  s.activation = Activation::prelu;
  s.slope = slope;
  return s;
}

LayerSpec LayerSpec::residual_block(std::size_t filters, std::size_t stride, Activation activation,
                                    float slope) {
  LayerSpec s;
  s.kind = LayerKind::residual_block;
  s.filters = filters;
  s.kernel = 3;
  s.stride = stride;
  s.padding = 1;
  s.activation = activation;
  s.slope = slope;
  return s;
}

LayerSpec LayerSpec::global_average_pool() {
  LayerSpec s;
  s.kind = LayerKind::pool;
  s.pool = PoolKind::global_average;
  return s;
}

LayerSpec LayerSpec::max_pool(std::size_t k) {
  LayerSpec s;
  s.kind = LayerKind::pool;
  s.pool = PoolKind::max;
  s.pool_size = k;
  return s;
}

LayerSpec LayerSpec::flatten() { return LayerSpec{}; }

bool residual_has_projection(const LayerSpec& block, std::size_t in_channels) noexcept {
  return block.filters != in_channels || block.stride != 1;
}

namespace {

[[noreturn]] void layer_error(std::size_t index, const LayerSpec& layer, const std::string& what) {
  throw Error(Errc::config, "layer " + std::to_string(index) + " (" +
                                std::string(layer_kind_name(layer.kind)) + "): " + what);
}

Extents conv_shape(std::size_t index, const LayerSpec& layer, const Extents& in) {
  if (in.size() != 3) layer_error(index, layer, "needs [C,H,W] input, got " + shape_string(in));
  if (layer.filters == 0 || layer.kernel == 0 || layer.stride == 0) {
    layer_error(index, layer, "filters, kernel and stride must be >= 1");
  }
  if (layer.kernel > in[1] + 2 * layer.padding || layer.kernel > in[2] + 2 * layer.padding) {
    layer_error(index, layer, "kernel " + std::to_string(layer.kernel) +
                                  " larger than padded input " + shape_string(in));
  }
  return {layer.filters, conv_output_extent(in[1], layer.kernel, layer.stride, layer.padding),
          conv_output_extent(in[2], layer.kernel, layer.stride, layer.padding)};
}

}  // namespace

std::vector<Extents> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.size() != 3 || element_count(spec.input_shape) == 0) {
    throw Error(Errc::config, "network input must be a nonempty [C,H,W] shape, got " +
                                  shape_string(spec.input_shape));
  }
  if (spec.embedding_dim == 0 || spec.num_classes == 0) {
    throw Error(Errc::config, "embedding_dim and num_classes must be >= 1");
  }
  std::vector<Extents> shapes;
  Extents cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    switch (layer.kind) {
      case LayerKind::binary_conv2d:
      case LayerKind::float_conv2d:
        cur = conv_shape(i, layer, cur);
        break;
      case LayerKind::residual_block: {
        if (layer.kernel != 3 || layer.padding != 1) {
          layer_error(i, layer, "residual blocks use 3x3 kernels with padding 1");
        }
        cur = conv_shape(i, layer, cur);
        break;
      }
      case LayerKind::linear:
        if (cur.size() != 1) layer_error(i, layer, "needs flat input, got " + shape_string(cur));
        if (layer.filters == 0) layer_error(i, layer, "output features must be >= 1");
        cur = {layer.filters};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::prelu:
        if (cur.empty()) layer_error(i, layer, "needs a channel axis");
        break;
      case LayerKind::pool:
        if (cur.size() != 3) layer_error(i, layer, "needs [C,H,W] input, got " + shape_string(cur));
        if (layer.pool == PoolKind::global_average) {
          cur = {cur[0]};
        } else {
          if (layer.pool_size == 0 || layer.pool_size > cur[1] || layer.pool_size > cur[2]) {
            layer_error(i, layer, "pool window " + std::to_string(layer.pool_size) +
                                      " does not fit " + shape_string(cur));
          }
          cur = {cur[0], cur[1] / layer.pool_size, cur[2] / layer.pool_size};
        }
        break;
      case LayerKind::flatten:
        cur = {element_count(cur)};
        break;
      default:
        layer_error(i, layer, "unknown layer kind");
    }
    shapes.push_back(cur);
  }
  if (cur != Extents{spec.embedding_dim}) {
    throw Error(Errc::config, "frontend output " + shape_string(cur) +
                                  " does not match embedding_dim " +
                                  std::to_string(spec.embedding_dim));
  }
  return shapes;
}

std::vector<ParamInfo> parameter_layout(const NetworkSpec& spec) {
  const std::vector<Extents> shapes = infer_shapes(spec);
  std::vector<ParamInfo> params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const Extents& in = i == 0 ? spec.input_shape : shapes[i - 1];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    switch (layer.kind) {
      case LayerKind::binary_conv2d:
      case LayerKind::float_conv2d: {
        const std::size_t fan_in = in[0] * layer.kernel * layer.kernel;
        params.push_back({i, prefix + "weight", {layer.filters, in[0], layer.kernel, layer.kernel},
                          ParamRole::weight, layer.kind == LayerKind::binary_conv2d, fan_in});
        break;
      }
      case LayerKind::residual_block: {
        const std::size_t F = layer.filters;
        params.push_back({i, prefix + "conv1", {F, in[0], 3, 3}, ParamRole::weight, true, in[0] * 9});
        params.push_back({i, prefix + "conv2", {F, F, 3, 3}, ParamRole::weight, true, F * 9});
        if (residual_has_projection(layer, in[0])) {
          params.push_back({i, prefix + "shortcut", {F, in[0], 1, 1}, ParamRole::weight, false, in[0]});
        }
        if (layer.activation == Activation::prelu) {
          params.push_back({i, prefix + "slope", {F}, ParamRole::slope, false, 0});
        }
        break;
      }
      case LayerKind::linear:
        params.push_back({i, prefix + "weight", {layer.filters, in[0]}, ParamRole::weight, false, in[0]});
        if (layer.bias) params.push_back({i, prefix + "bias", {layer.filters}, ParamRole::bias, false, 0});
        break;
      case LayerKind::prelu:
        params.push_back({i, prefix + "slope", {in[0]}, ParamRole::slope, false, 0});
        break;
      default:
        break;
    }
  }
  const std::size_t c = spec.layers.size();
  params.push_back({c, "classifier.weight", {spec.num_classes, spec.embedding_dim}, ParamRole::weight, false,
                    spec.embedding_dim});
  params.push_back({c, "classifier.bias", {spec.num_classes}, ParamRole::bias, false, 0});
  return params;
}

std::size_t parameter_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(spec)) n += element_count(p.shape);
  return n;
}

NetworkSpec build_micro_resnet(const MicroResNetOptions& options) {
  if (options.depth_blocks == 0) {
    throw Error(Errc::config, "micro resnet: depth_blocks must be >= 1");
  }
  if (options.channels.empty()) {
    throw Error(Errc::config, "micro resnet: channel list is empty");
  }
  for (std::size_t i = 0; i < options.channels.size(); ++i) {
    if (options.channels[i] == 0) {
      throw Error(Errc::config, "micro resnet: stage " + std::to_string(i) + " has zero channels");
    }
  }
  NetworkSpec spec;
  spec.input_shape = options.input_shape;
  spec.embedding_dim = options.embedding_dim;
  spec.num_classes = options.num_classes;

  auto activation_layer = [&] {
    return options.activation == Activation::relu ? LayerSpec::relu()
                                                  : LayerSpec::prelu(options.prelu_slope);
  };

  spec.layers.push_back(LayerSpec::float_conv2d(options.channels.front(), 3, 1, 1));
  spec.layers.push_back(activation_layer());
  for (std::size_t stage = 0; stage < options.channels.size(); ++stage) {
    for (std::size_t b = 0; b < options.depth_blocks; ++b) {
      const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
      spec.layers.push_back(LayerSpec::residual_block(options.channels[stage], stride,
                                                      options.activation, options.prelu_slope));
    }
  }
  spec.layers.push_back(activation_layer());
  spec.layers.push_back(LayerSpec::global_average_pool());
  spec.layers.push_back(LayerSpec::linear(options.embedding_dim, false));
  infer_shapes(spec);  // shape-check the whole stack
  return spec;
}

template <typename T>
BasicTensor<T> binary_conv2d_forward(const BasicTensor<T>& input, const BinaryFilterBank& bank,
                                     std::size_t stride, std::size_t padding, OpCounter* counter) {
  const Shape4 in = shape4(input);
  const Extents& fs = bank.filter_shape();
  if (fs.size() != 3 || fs[0] != in.channels) {
    throw Error(Errc::shape_mismatch, "binary conv2d: filter shape " + shape_string(fs) +
                                          " incompatible with input " +
                                          shape_string(input.shape()));
  }
  if (stride == 0) throw Error(Errc::invalid_argument, "binary conv2d: stride must be >= 1");
  const std::size_t F = bank.num_filters(), KH = fs[1], KW = fs[2];
  const std::size_t OH = conv_output_extent(in.height, KH, stride, padding);
  const std::size_t OW = conv_output_extent(in.width, KW, stride, padding);

  BasicTensor<T> out({in.batch, F, OH, OW});
  std::vector<double> acc(OH * OW);
  const T* x = input.data().data();
  std::uint64_t additions = 0;

  for (std::size_t n = 0; n < in.batch; ++n) {
    for (std::size_t f = 0; f < F; ++f) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t c = 0; c < in.channels; ++c) {
        const T* plane = x + (n * in.channels + c) * in.height * in.width;
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const detail::ValidRange rows = detail::valid_range(OH, in.height, kh, stride, padding);
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const detail::ValidRange cols = detail::valid_range(OW, in.width, kw, stride, padding);
            const bool positive = bank.positive(f, (c * KH + kh) * KW + kw);
            for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
              const T* src = plane + (oh * stride + kh - padding) * in.width;
              double* dst = acc.data() + oh * OW;
              if (positive) {
                for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) {
                  dst[ow] += static_cast<double>(src[ow * stride + kw - padding]);
                }
              } else {
                for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) {
                  dst[ow] -= static_cast<double>(src[ow * stride + kw - padding]);
                }
              }
            }
            additions += (rows.hi - rows.lo) * (cols.hi - cols.lo);
          }
        }
      }
      const double a = bank.scale(f);
      T* dst = &out.at(n, f, 0, 0);
      for (std::size_t i = 0; i < OH * OW; ++i) dst[i] = static_cast<T>(acc[i] * a);
    }
  }
  if (counter) {
    counter->additions += additions;
    counter->scale_multiplies += in.batch * F * OH * OW;
  }
  return out;
}

template BasicTensor<float> binary_conv2d_forward(const BasicTensor<float>&,
                                                  const BinaryFilterBank&, std::size_t,
                                                  std::size_t, OpCounter*);
template BasicTensor<double> binary_conv2d_forward(const BasicTensor<double>&,
                                                   const BinaryFilterBank&, std::size_t,
                                                   std::size_t, OpCounter*);

}  // namespace bwn
