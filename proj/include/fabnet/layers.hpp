#pragma once

#include "fabnet/tensor.hpp"

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace fabnet {

struct ConvLayer {
  std::size_t filters = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool operator==(const ConvLayer&) const = default;
};

struct MaxPoolLayer {
  std::size_t window = 2;
  std::size_t stride = 2;
  bool operator==(const MaxPoolLayer&) const = default;
};

struct ReluLayer {
  bool operator==(const ReluLayer&) const = default;
};

struct SigmoidLayer {
  bool operator==(const SigmoidLayer&) const = default;
};

/// Inverted dropout with drop probability p in [0, 1).
struct DropoutLayer {
  double p = 0.0;
  bool operator==(const DropoutLayer&) const = default;
};

struct FlattenLayer {
  bool operator==(const FlattenLayer&) const = default;
};

/// Fully connected. `inputs` is optional (0 = inferred); when given it must
/// match the incoming width.
struct DenseLayer {
  std::size_t units = 0;
  std::size_t inputs = 0;
  bool operator==(const DenseLayer&) const = default;
};

/// Terminal layer: softmax over the K class scores.
struct SoftmaxOutput {
  bool operator==(const SoftmaxOutput&) const = default;
};

/// Terminal layer: independent per-class sigmoid.
struct SigmoidOutput {
  bool operator==(const SigmoidOutput&) const = default;
};

using LayerSpec = std::variant<ConvLayer, MaxPoolLayer, ReluLayer, SigmoidLayer, DropoutLayer,
                               FlattenLayer, DenseLayer, SoftmaxOutput, SigmoidOutput>;

std::string layer_kind(const LayerSpec& layer);
bool is_output_layer(const LayerSpec& layer);

/// Canonical one-line form, e.g. "conv filters=8 kernel=3 stride=1 padding=1".
std::string layer_to_text(const LayerSpec& layer);
LayerSpec layer_from_text(const std::string& text);

/// Declarative layer stack over a [C,H,W] input producing K class scores.
struct ModelSpec {
  Shape input;  // [C, H, W]
  std::vector<LayerSpec> layers;
  std::size_t classes = 3;

  bool operator==(const ModelSpec&) const = default;
};

/// Per-layer output shapes (per sample, without the batch axis). Throws
/// ShapeChainError naming the first layer that does not fit.
std::vector<Shape> validate(const ModelSpec& spec);

/// Canonical key=value text; parse_model_spec(model_spec_to_text(s)) == s.
std::string model_spec_to_text(const ModelSpec& spec);
ModelSpec parse_model_spec(const std::string& text);

enum class Activation { relu, sigmoid };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Reference architecture parameterized by the tunable depth, dropout and
/// hidden activation:
///
///   conv(8,3x3) act maxpool(2,2) conv(16,3x3) act maxpool(2,2) flatten
///   [dense(64) act dropout(p)] x hidden_layers  dense(K) softmax-output
///
/// Convolutions use padding 1 so any input whose side is divisible by 4 chains.
struct SpecTemplate {
  Shape input{3, 64, 64};
  std::size_t classes = 3;
  std::vector<std::size_t> conv_filters{8, 16};
  std::size_t kernel = 3;
  std::size_t dense_units = 64;
  bool sigmoid_output = false;

  ModelSpec instantiate(std::size_t hidden_layers, double dropout_p,
                        Activation activation) const;
};

} // namespace fabnet
