#pragma once

#include "fabnet/keyvalue.hpp"
#include "fabnet/layers.hpp"
#include "fabnet/model.hpp"
#include "fabnet/sample.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fabnet {

struct HyperParams {
  double learning_rate = 0.01;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double dropout_p = 0.0;
  double l2_lambda = 0.0;
  Activation activation = Activation::relu;
  std::size_t hidden_layers = 1;

  /// Throws ConfigError naming the first out-of-range field.
  void validate() const;

  KeyValueDoc to_doc() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static HyperParams from_doc(const KeyValueDoc& doc);

  bool operator==(const HyperParams&) const = default;
};

/// Applies the depth, dropout and activation knobs to a template.
ModelSpec instantiate(const SpecTemplate& tmpl, const HyperParams& hp);

struct EpochRecord {
  std::size_t epoch = 0;  // from 1
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::vector<double> epoch_seconds;  // wall clock, not part of equality
  std::uint64_t seed = 0;

  bool operator==(const TrainLog& other) const {
    return records == other.records && seed == other.seed;
  }

  /// "epoch,train_loss,train_acc,val_loss,val_acc" plus one row per epoch.
  std::string to_csv() const;
  static TrainLog from_csv(const std::string& text);
};

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

inline constexpr double log_epsilon = 1e-12;

/// Mean negative log-likelihood -(1/N) sum log(score[n, label_n] + eps) and
/// its gradient with respect to the scores.
LossAndGrad cross_entropy(const Tensor& scores, std::span<const std::size_t> labels);

/// w <- w - lr * (g + lambda * w) for weights; biases skip the decay term.
Model sgd_step(Model model, const GradientSet& grads, const HyperParams& hp);
void apply_sgd(Model& model, const GradientSet& grads, const HyperParams& hp);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;
};

/// Eval-mode pass over a sample set in fixed-size chunks.
Evaluation evaluate(const Model& model, std::span<const Sample> samples);

Tensor make_batch(std::span<const Sample> samples, std::span<const std::size_t> order);

struct TrainResult {
  Model model;
  TrainLog log;
};

struct TrainOptions {
  /// Called after every epoch (progress reporting).
  std::function<void(const EpochRecord&, double seconds)> on_epoch;
};

/// Seeded mini-batch SGD. The train set is reshuffled every epoch, the last
/// short batch is kept, and the validation set is scored in eval mode after
/// each epoch. Deterministic in (spec, hp, data, seed).
TrainResult train(const ModelSpec& spec, const HyperParams& hp, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, std::uint64_t seed,
                  const TrainOptions& options = {});

} // namespace fabnet
