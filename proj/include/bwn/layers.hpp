#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bwn/binarization.hpp"
#include "bwn/ops.hpp"
#include "bwn/tensor.hpp"

namespace bwn {

// Numeric values are part of the model file format.
enum class LayerKind : std::uint8_t {
  binary_conv2d = 0,
  float_conv2d = 1,
  linear = 2,
  relu = 3,
  prelu = 4,
  residual_block = 5,
  pool = 6,
  flatten = 7,
};

enum class PoolKind : std::uint8_t { global_average = 0, max = 1 };

enum class Activation : std::uint8_t { relu = 0, prelu = 1 };

std::string_view layer_kind_name(LayerKind kind) noexcept;
std::string_view activation_name(Activation a) noexcept;

struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  std::size_t filters = 0;  // conv / residual output channels, linear output features
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = false;                         // linear only
  Activation activation = Activation::relu;  // residual block inner activation
  float slope = 0.25f;                       // initial PReLU slope
  PoolKind pool = PoolKind::global_average;
  std::size_t pool_size = 0;  // max pooling window

  /// Whether the layer carries sign-binarised filters. Derived from the kind
  /// so it can never disagree with it.
  bool binarized() const noexcept {
    return kind == LayerKind::binary_conv2d || kind == LayerKind::residual_block;
  }

  static LayerSpec binary_conv2d(std::size_t filters, std::size_t kernel, std::size_t stride = 1,
                                 std::size_t padding = 0);
  static LayerSpec float_conv2d(std::size_t filters, std::size_t kernel, std::size_t stride = 1,
                                std::size_t padding = 0);
  static LayerSpec linear(std::size_t out_features, bool bias = false);
  static LayerSpec relu();
  static LayerSpec prelu(float slope = 0.25f);
  /// Two binary 3x3 convolutions plus shortcut; the shortcut is a float 1x1
  /// projection when the channel count or stride changes.
  static LayerSpec residual_block(std::size_t filters, std::size_t stride,
                                  Activation activation, float slope = 0.25f);
  static LayerSpec global_average_pool();
  static LayerSpec max_pool(std::size_t k);
  static LayerSpec flatten();

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Frontend layers map a [C,H,W] input to a flat embedding_dim vector, which
/// is L2-normalised and fed to a full-precision classifier with bias.
struct NetworkSpec {
  Extents input_shape{1, 32, 32};
  std::vector<LayerSpec> layers;
  std::size_t embedding_dim = 128;
  std::size_t num_classes = 2;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Per-sample output extents of every frontend layer. Throws config with the
/// failing layer index when consecutive shapes are incompatible or the
/// frontend does not end in a flat embedding_dim vector.
std::vector<Extents> infer_shapes(const NetworkSpec& spec);

bool residual_has_projection(const LayerSpec& block, std::size_t in_channels) noexcept;

enum class ParamRole : std::uint8_t { weight, bias, slope };

struct ParamInfo {
  std::size_t layer = 0;  // spec.layers.size() denotes the classifier
  std::string name;
  Extents shape;
  ParamRole role = ParamRole::weight;
  bool binarizable = false;
  std::size_t fan_in = 0;  // zero for biases and slopes
};

/// Flat parameter list in execution order; every per-parameter container in
/// the engine is indexed the same way.
std::vector<ParamInfo> parameter_layout(const NetworkSpec& spec);

std::size_t parameter_count(const NetworkSpec& spec);

struct MicroResNetOptions {
  std::size_t depth_blocks = 1;           // residual blocks per stage
  std::vector<std::size_t> channels{8};   // one entry per stage
  std::size_t embedding_dim = 128;
  Activation activation = Activation::relu;
  float prelu_slope = 0.25f;
  Extents input_shape{1, 32, 32};
  std::size_t num_classes = 10;
};

/// Float 3x3 stem, then depth_blocks residual blocks per stage (the first
/// block of every later stage downsamples by 2), a final activation, global
/// average pooling and a float linear embedding layer.
NetworkSpec build_micro_resnet(const MicroResNetOptions& options);

/// Multiplication-free convolution: each filter's window sum adds or
/// subtracts inputs according to the sign bits, then the whole output plane
/// is multiplied once by the filter scale.
template <typename T>
BasicTensor<T> binary_conv2d_forward(const BasicTensor<T>& input, const BinaryFilterBank& bank,
                                     std::size_t stride, std::size_t padding,
                                     OpCounter* counter = nullptr);

}  // namespace bwn
