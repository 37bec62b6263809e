#include "fabnet/tuner.hpp"

#include "fabnet/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <future>
#include <map>

namespace fabnet {

std::string axis_name(Axis axis) {
  switch (axis) {
  case Axis::learning_rate:
    return "learning_rate";
  case Axis::batch_size:
    return "batch_size";
  case Axis::hidden_layers:
    return "hidden_layers";
  case Axis::dropout_p:
    return "dropout_p";
  case Axis::l2_lambda:
    return "l2_lambda";
  case Axis::activation:
    return "activation";
  }
  return "?";
}

namespace {

constexpr Axis axis_order[] = {Axis::learning_rate, Axis::batch_size, Axis::hidden_layers,
                               Axis::dropout_p,     Axis::l2_lambda,  Axis::activation};

template <typename T> std::string join(const std::vector<T>& items, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i)
    out += (i ? "," : "") + fmt(items[i]);
  return out;
}

} // namespace

std::size_t SearchSpace::axis_size(Axis axis) const {
  switch (axis) {
  case Axis::learning_rate:
    return learning_rate.size();
  case Axis::batch_size:
    return batch_size.size();
  case Axis::hidden_layers:
    return hidden_layers.size();
  case Axis::dropout_p:
    return dropout_p.size();
  case Axis::l2_lambda:
    return l2_lambda.size();
  case Axis::activation:
    return activation.size();
  }
  return 0;
}

std::size_t SearchSpace::trial_budget() const {
  std::size_t total = 0;
  for (Axis a : axis_order)
    total += axis_size(a);
  return total;
}

HyperParams SearchSpace::with_candidate(HyperParams hp, Axis axis, std::size_t i) const {
  switch (axis) {
  case Axis::learning_rate:
    hp.learning_rate = learning_rate.at(i);
    break;
  case Axis::batch_size:
    hp.batch_size = batch_size.at(i);
    break;
  case Axis::hidden_layers:
    hp.hidden_layers = hidden_layers.at(i);
    break;
  case Axis::dropout_p:
    hp.dropout_p = dropout_p.at(i);
    break;
  case Axis::l2_lambda:
    hp.l2_lambda = l2_lambda.at(i);
    break;
  case Axis::activation:
    hp.activation = activation.at(i);
    break;
  }
  return hp;
}

HyperParams SearchSpace::defaults() const {
  HyperParams hp;
  hp.epochs = probe_epochs;
  for (Axis a : axis_order)
    hp = with_candidate(hp, a, 0);
  return hp;
}

void SearchSpace::validate() const {
  for (Axis a : axis_order)
    if (axis_size(a) == 0)
      throw ConfigError("search axis " + axis_name(a) + " has no candidates");
  if (probe_epochs == 0)
    throw ConfigError("probe_epochs must be positive");
  HyperParams hp = defaults();
  for (Axis a : axis_order)
    for (std::size_t i = 0; i < axis_size(a); ++i)
      with_candidate(hp, a, i).validate();
}

KeyValueDoc SearchSpace::to_doc() const {
  auto num = [](double v) { return format_double(v); };
  auto cnt = [](std::size_t v) { return std::to_string(v); };
  KeyValueDoc doc;
  doc.set("learning_rate", join(learning_rate, num));
  doc.set("batch_size", join(batch_size, cnt));
  doc.set("hidden_layers", join(hidden_layers, cnt));
  doc.set("dropout_p", join(dropout_p, num));
  doc.set("l2_lambda", join(l2_lambda, num));
  doc.set("activation", join(activation, activation_name));
  doc.set("probe_epochs", std::to_string(probe_epochs));
  return doc;
}

SearchSpace SearchSpace::from_doc(const KeyValueDoc& doc) {
  doc.reject_unknown({"learning_rate", "batch_size", "hidden_layers", "dropout_p", "l2_lambda",
                      "activation", "probe_epochs"});
  SearchSpace s;
  auto doubles = [&](const char* key, std::vector<double>& out) {
    if (auto v = doc.get(key)) {
      out.clear();
      for (const auto& item : split_list(*v))
        out.push_back(parse_double(item, key));
    }
  };
  auto counts = [&](const char* key, std::vector<std::size_t>& out) {
    if (auto v = doc.get(key)) {
      out.clear();
      for (const auto& item : split_list(*v)) {
        const long long n = parse_int(item, key);
        if (n <= 0)
          throw ConfigError(std::string(key) + " candidates must be positive");
        out.push_back(static_cast<std::size_t>(n));
      }
    }
  };
  doubles("learning_rate", s.learning_rate);
  counts("batch_size", s.batch_size);
  counts("hidden_layers", s.hidden_layers);
  doubles("dropout_p", s.dropout_p);
  doubles("l2_lambda", s.l2_lambda);
  if (auto v = doc.get("activation")) {
    s.activation.clear();
    for (const auto& item : split_list(*v))
      s.activation.push_back(parse_activation(item));
  }
  if (auto v = doc.get("probe_epochs")) {
    const long long n = parse_int(*v, "probe_epochs");
    if (n <= 0)
      throw ConfigError("probe_epochs must be positive");
    s.probe_epochs = static_cast<std::size_t>(n);
  }
  s.validate();
  return s;
}

std::string TrialRecord::to_json_line(bool with_timing) const {
  nlohmann::json j;
  j["axis"] = axis_name(axis);
  j["candidate"] = candidate;
  nlohmann::json h;
  const KeyValueDoc doc = hp.to_doc();
  for (const auto& [k, v] : doc.entries())
    h[k] = v;
  j["hp"] = h;
  j["failed"] = failed;
  if (failed) {
    j["failure"] = failure;
    j["val_accuracy"] = nullptr;
    j["val_loss"] = nullptr;
  } else {
    j["val_accuracy"] = val_accuracy;
    j["val_loss"] = val_loss;
  }
  j["seed"] = seed;
  if (with_timing)
    j["elapsed_seconds"] = elapsed_seconds;
  return j.dump();
}

namespace {

struct Outcome {
  bool failed = false;
  std::string failure;
  ProbeOutcome result;
  double seconds = 0.0;
};

Outcome run_probe(const ProbeRunner& probe, const HyperParams& hp, std::uint64_t seed) {
  Outcome o;
  const auto started = std::chrono::steady_clock::now();
  try {
    o.result = probe(hp, seed);
  } catch (const std::exception& e) {
    o.failed = true;
    o.failure = e.what();
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return o;
}

// True if a beats b under the accuracy, then loss, then order rule; b is
// the earlier candidate.
bool better(const Outcome& a, const Outcome& b) {
  if (a.failed)
    return false;
  if (b.failed)
    return true;
  if (a.result.val_accuracy != b.result.val_accuracy)
    return a.result.val_accuracy > b.result.val_accuracy;
  return a.result.val_loss < b.result.val_loss;
}

} // namespace

SearchResult coordinate_search(const SearchSpace& space, const ProbeRunner& probe,
                               std::uint64_t seed, const SearchOptions& options) {
  space.validate();
  SearchResult out;
  HyperParams locked = space.defaults();
  // Repeated configurations (e.g. the previous winner reappearing as the
  // first candidate of the next axis) reuse the recorded outcome.
  std::map<std::string, Outcome> cache;
  const std::size_t threads = std::max<std::size_t>(1, options.threads);

  for (Axis axis : axis_order) {
    const std::size_t n = space.axis_size(axis);
    std::vector<HyperParams> hps;
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < n; ++i) {
      hps.push_back(space.with_candidate(locked, axis, i));
      keys.push_back(hps.back().to_doc().to_text());
    }

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < n; ++i) {
      const bool queued = std::any_of(pending.begin(), pending.end(),
                                      [&](std::size_t j) { return keys[j] == keys[i]; });
      if (!cache.contains(keys[i]) && !queued)
        pending.push_back(i);
    }
    for (std::size_t start = 0; start < pending.size(); start += threads) {
      const std::size_t end = std::min(pending.size(), start + threads);
      if (end - start == 1) {
        cache[keys[pending[start]]] = run_probe(probe, hps[pending[start]], seed);
        continue;
      }
      std::vector<std::future<Outcome>> jobs;
      for (std::size_t j = start; j < end; ++j)
        jobs.push_back(std::async(std::launch::async, run_probe, std::cref(probe),
                                  hps[pending[j]], seed));
      for (std::size_t j = start; j < end; ++j)
        cache[keys[pending[j]]] = jobs[j - start].get();
    }

    std::size_t winner = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Outcome& o = cache.at(keys[i]);
      const bool fresh = std::find(pending.begin(), pending.end(), i) != pending.end();
      TrialRecord rec;
      rec.axis = axis;
      rec.candidate = i;
      rec.hp = hps[i];
      rec.failed = o.failed;
      rec.failure = o.failure;
      rec.val_accuracy = o.result.val_accuracy;
      rec.val_loss = o.result.val_loss;
      rec.seed = seed;
      rec.elapsed_seconds = fresh ? o.seconds : 0.0;
      out.trials.push_back(rec);
      if (options.on_trial)
        options.on_trial(rec);
      if (i > 0 && better(o, cache.at(keys[winner])))
        winner = i;
    }
    locked = hps[winner];
  }
  out.best = locked;
  return out;
}

ProbeRunner training_probe(const SpecTemplate& tmpl, std::span<const Sample> train_set,
                           std::span<const Sample> val_set) {
  return [tmpl, train_set, val_set](const HyperParams& hp, std::uint64_t seed) {
    const TrainResult r = train(instantiate(tmpl, hp), hp, train_set, val_set, seed);
    const EpochRecord& last = r.log.records.back();
    return ProbeOutcome{last.val_accuracy, last.val_loss};
  };
}

SearchResult coordinate_search(const SearchSpace& space, const SpecTemplate& tmpl,
                               std::span<const Sample> train_set, std::span<const Sample> val_set,
                               std::uint64_t seed, const SearchOptions& options) {
  if (train_set.empty() || val_set.empty())
    throw DataError("coordinate search needs non-empty train and validation sets");
  return coordinate_search(space, training_probe(tmpl, train_set, val_set), seed, options);
}

TrainResult final_train(const HyperParams& best, const SpecTemplate& tmpl,
                        std::span<const Sample> train_set, std::span<const Sample> val_set,
                        std::size_t epochs, std::uint64_t seed, const TrainOptions& options) {
  HyperParams hp = best;
  hp.epochs = epochs;
  return train(instantiate(tmpl, hp), hp, train_set, val_set, seed, options);
}

} // namespace fabnet
