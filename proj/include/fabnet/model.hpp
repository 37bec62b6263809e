#pragma once

#include "fabnet/layers.hpp"
#include "fabnet/ops.hpp"
#include "fabnet/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fabnet {

enum class Mode { train, eval };

struct Parameter {
  std::string name;  // e.g. "layer0.weight"
  Tensor value;
  bool decays = true;  // weights take L2 decay, biases do not
};

/// Instantiated ModelSpec: parameters in spec order plus the train/eval mode.
///
/// Every mutation of the parameters stamps the model with a fresh version
/// so tapes recorded against older values can be detected.
class Model {
public:
  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<Shape>& layer_shapes() const noexcept { return shapes_; }

  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  /// Mutable access; bumps the version.
  Parameter& parameter(std::size_t index);
  std::size_t parameter_count() const noexcept { return params_.size(); }
  /// Indices into parameters() of the weight and bias of a parameterized layer.
  int weight_index(std::size_t layer) const { return weight_index_.at(layer); }

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  std::uint64_t version() const noexcept { return version_; }

private:
  friend Model build(const ModelSpec& spec, std::uint64_t seed);
  friend Model assemble(const ModelSpec& spec, std::vector<Tensor> values);

  ModelSpec spec_;
  std::vector<Shape> shapes_;
  std::vector<Parameter> params_;
  std::vector<int> weight_index_;  // per layer, -1 when parameter-free
  Mode mode_ = Mode::train;
  std::uint64_t version_ = 0;
};

/// He-style uniform init, bound sqrt(6 / fan_in); biases zero.
Model build(const ModelSpec& spec, std::uint64_t seed);

/// Model from explicit parameter values in spec order (checkpoint loading).
Model assemble(const ModelSpec& spec, std::vector<Tensor> values);

/// What forward() records for backward().
struct TapeCache {
  std::uint64_t version = 0;
  Mode mode = Mode::eval;
  std::vector<Tensor> inputs;             // input to each layer, batch-leading
  std::vector<ArgmaxIndexMap> argmax;     // maxpool layers only
  std::vector<std::vector<double>> masks; // dropout layers only; empty = identity
  Tensor output;
};

struct ForwardResult {
  Tensor scores;  // [N, K]
  TapeCache tape;
};

/// Runs the batch [N,C,H,W] through the stack. `seed` drives dropout masks
/// in train mode; eval mode ignores it.
ForwardResult forward(const Model& model, const Tensor& batch, std::uint64_t seed);

/// Class scores only, no tape (eval-time inference).
Tensor predict_scores(const Model& model, const Tensor& batch);

/// One gradient per parameter (same order and shapes) plus the gradient
/// with respect to the input batch.
struct GradientSet {
  std::vector<Tensor> params;
  Tensor input;
};

/// Backpropagates `loss_grad` (d loss / d scores). Per-sample contributions
/// are summed, so a loss gradient that already carries the 1/N of a batch
/// mean (as cross_entropy's does) yields batch-averaged parameter gradients.
GradientSet backward(const Model& model, const TapeCache& tape, const Tensor& loss_grad);

} // namespace fabnet
