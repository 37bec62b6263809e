#pragma once

#include "fabnet/layers.hpp"
#include "fabnet/optimize.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fabnet {

enum class Axis { learning_rate, batch_size, hidden_layers, dropout_p, l2_lambda, activation };

std::string axis_name(Axis axis);

/// Candidate lists per axis, swept in the fixed order of `Axis`.
struct SearchSpace {
  std::vector<double> learning_rate{1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<std::size_t> batch_size{8, 16, 32};
  std::vector<std::size_t> hidden_layers{1, 2, 3};
  std::vector<double> dropout_p{0.0, 0.25, 0.5};
  std::vector<double> l2_lambda{0.0, 1e-4, 1e-3};
  std::vector<Activation> activation{Activation::relu, Activation::sigmoid};
  std::size_t probe_epochs = 10;

  /// Throws ConfigError for an empty axis or invalid candidate.
  void validate() const;
  std::size_t axis_size(Axis axis) const;
  std::size_t trial_budget() const;

  /// HyperParams with every axis at its first candidate.
  HyperParams defaults() const;
  /// `base` with `axis` set to its candidate number `index`.
  HyperParams with_candidate(HyperParams base, Axis axis, std::size_t index) const;

  KeyValueDoc to_doc() const;
  static SearchSpace from_doc(const KeyValueDoc& doc);
};

struct TrialRecord {
  Axis axis = Axis::learning_rate;
  std::size_t candidate = 0;
  HyperParams hp;
  bool failed = false;
  std::string failure;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  std::uint64_t seed = 0;
  double elapsed_seconds = 0.0;

  /// One JSON object; elapsed time only when requested (it is the one
  /// field that varies between identical runs).
  std::string to_json_line(bool with_timing = false) const;
};

struct ProbeOutcome {
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

/// Runs one probe. Throwing marks the trial failed.
using ProbeRunner = std::function<ProbeOutcome(const HyperParams&, std::uint64_t seed)>;

struct SearchResult {
  HyperParams best;
  std::vector<TrialRecord> trials;
};

struct SearchOptions {
  /// Concurrent probes within one axis; results never depend on it.
  std::size_t threads = 1;
  std::function<void(const TrialRecord&)> on_trial;
};

/// One-axis-at-a-time search. Axis k sweeps its candidates with earlier
/// axes locked to their winners and later axes at their first candidate.
/// Winner: highest val_accuracy, then lower val_loss, then earlier
/// candidate. Failed trials are recorded and never win; an axis whose
/// candidates all fail keeps its first candidate. Every probe uses `seed`.
SearchResult coordinate_search(const SearchSpace& space, const ProbeRunner& probe,
                               std::uint64_t seed, const SearchOptions& options = {});

/// The standard probe: train the instantiated template for the probe's
/// epochs and report the last epoch's validation scores.
ProbeRunner training_probe(const SpecTemplate& tmpl, std::span<const Sample> train_set,
                           std::span<const Sample> val_set);

SearchResult coordinate_search(const SearchSpace& space, const SpecTemplate& tmpl,
                               std::span<const Sample> train_set, std::span<const Sample> val_set,
                               std::uint64_t seed, const SearchOptions& options = {});

/// Full-length run with the winning hyperparameters for `epochs` epochs.
TrainResult final_train(const HyperParams& best, const SpecTemplate& tmpl,
                        std::span<const Sample> train_set, std::span<const Sample> val_set,
                        std::size_t epochs, std::uint64_t seed, const TrainOptions& options = {});

} // namespace fabnet
