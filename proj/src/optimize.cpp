#include "fabnet/optimize.hpp"

#include "fabnet/error.hpp"
#include "fabnet/random.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fabnet {

void HyperParams::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be a positive finite number");
  if (batch_size == 0)
    throw ConfigError("batch_size must be positive");
  if (epochs == 0)
    throw ConfigError("epochs must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ConfigError("dropout_p must lie in [0, 1)");
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda))
    throw ConfigError("l2_lambda must be non-negative");
  if (hidden_layers == 0)
    throw ConfigError("hidden_layers must be positive");
}

KeyValueDoc HyperParams::to_doc() const {
  KeyValueDoc doc;
  doc.set("learning_rate", format_double(learning_rate));
  doc.set("batch_size", std::to_string(batch_size));
  doc.set("epochs", std::to_string(epochs));
  doc.set("dropout_p", format_double(dropout_p));
  doc.set("l2_lambda", format_double(l2_lambda));
  doc.set("activation", activation_name(activation));
  doc.set("hidden_layers", std::to_string(hidden_layers));
  return doc;
}

namespace {

std::size_t positive_count(const std::string& text, const char* key) {
  const long long v = parse_int(text, key);
  if (v <= 0)
    throw ConfigError(std::string(key) + " must be positive");
  return static_cast<std::size_t>(v);
}

} // namespace

HyperParams HyperParams::from_doc(const KeyValueDoc& doc) {
  doc.reject_unknown({"learning_rate", "batch_size", "epochs", "dropout_p", "l2_lambda",
                      "activation", "hidden_layers"});
  HyperParams hp;
  if (auto v = doc.get("learning_rate"))
    hp.learning_rate = parse_double(*v, "learning_rate");
  if (auto v = doc.get("batch_size"))
    hp.batch_size = positive_count(*v, "batch_size");
  if (auto v = doc.get("epochs"))
    hp.epochs = positive_count(*v, "epochs");
  if (auto v = doc.get("dropout_p"))
    hp.dropout_p = parse_double(*v, "dropout_p");
  if (auto v = doc.get("l2_lambda"))
    hp.l2_lambda = parse_double(*v, "l2_lambda");
  if (auto v = doc.get("activation"))
    hp.activation = parse_activation(*v);
  if (auto v = doc.get("hidden_layers"))
    hp.hidden_layers = positive_count(*v, "hidden_layers");
  hp.validate();
  return hp;
}

ModelSpec instantiate(const SpecTemplate& tmpl, const HyperParams& hp) {
  return tmpl.instantiate(hp.hidden_layers, hp.dropout_p, hp.activation);
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : records)
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
           format_double(r.train_accuracy) + "," + format_double(r.val_loss) + "," +
           format_double(r.val_accuracy) + "\n";
  return out;
}

TrainLog TrainLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "epoch,train_loss,train_acc,val_loss,val_acc")
    throw DataError("curves CSV: unexpected header");
  TrainLog log;
  while (std::getline(in, line)) {
    if (trim(line).empty())
      continue;
    const auto cols = split_list(line);
    if (cols.size() != 5)
      throw DataError("curves CSV: expected 5 columns in '" + line + "'");
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_int(cols[0], "epoch"));
    r.train_loss = parse_double(cols[1], "train_loss");
    r.train_accuracy = parse_double(cols[2], "train_acc");
    r.val_loss = parse_double(cols[3], "val_loss");
    r.val_accuracy = parse_double(cols[4], "val_acc");
    log.records.push_back(r);
  }
  return log;
}

LossAndGrad cross_entropy(const Tensor& scores, std::span<const std::size_t> labels) {
  if (scores.rank() != 2)
    throw DimensionError("cross_entropy: scores must be [N,K], got " +
                         shape_string(scores.shape()));
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  if (labels.size() != n)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " score rows");
  LossAndGrad r{0.0, Tensor(scores.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k)
      throw DataError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                      std::to_string(k) + ")");
    const double p = scores.at(i, labels[i]) + log_epsilon;
    r.loss -= std::log(p);
    r.grad.at(i, labels[i]) = -inv_n / p;
  }
  r.loss *= inv_n;
  return r;
}

void apply_sgd(Model& model, const GradientSet& grads, const HyperParams& hp) {
  if (grads.params.size() != model.parameter_count())
    throw DimensionError("sgd_step: " + std::to_string(grads.params.size()) +
                         " gradients for " + std::to_string(model.parameter_count()) +
                         " parameters");
  for (std::size_t i = 0; i < grads.params.size(); ++i)
    if (grads.params[i].shape() != model.parameters()[i].value.shape())
      throw DimensionError("sgd_step: gradient " + std::to_string(i) + " has shape " +
                           shape_string(grads.params[i].shape()) + ", parameter has " +
                           shape_string(model.parameters()[i].value.shape()));
  const double lr = hp.learning_rate;
  for (std::size_t i = 0; i < grads.params.size(); ++i) {
    Parameter& p = model.parameter(i);
    const double lambda = p.decays ? hp.l2_lambda : 0.0;
    auto w = p.value.data();
    const auto g = grads.params[i].data();
    for (std::size_t j = 0; j < w.size(); ++j)
      w[j] -= lr * (g[j] + lambda * w[j]);
  }
}

Model sgd_step(Model model, const GradientSet& grads, const HyperParams& hp) {
  apply_sgd(model, grads, hp);
  return model;
}

Tensor make_batch(std::span<const Sample> samples, std::span<const std::size_t> order) {
  std::vector<const Tensor*> items;
  items.reserve(order.size());
  for (std::size_t i : order)
    items.push_back(&samples[i].image);
  return stack(items);
}

namespace {

constexpr std::size_t eval_chunk = 32;

std::size_t argmax_row(const Tensor& scores, std::size_t row) {
  const std::size_t k = scores.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (scores.at(row, j) > scores.at(row, best))
      best = j;
  return best;
}

} // namespace

Evaluation evaluate(const Model& model, std::span<const Sample> samples) {
  Evaluation ev;
  if (samples.empty())
    return ev;
  Model view = model;
  view.set_mode(Mode::eval);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> order;
  for (std::size_t start = 0; start < samples.size(); start += eval_chunk) {
    const std::size_t end = std::min(samples.size(), start + eval_chunk);
    order.resize(end - start);
    std::iota(order.begin(), order.end(), start);
    const Tensor scores = predict_scores(view, make_batch(samples, order));
    std::vector<std::size_t> labels;
    for (std::size_t i : order)
      labels.push_back(index_of(samples[i].label));
    loss_sum += cross_entropy(scores, labels).loss * static_cast<double>(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      const std::size_t pred = argmax_row(scores, r);
      ev.predictions.push_back(pred);
      correct += pred == labels[r];
    }
  }
  ev.loss = loss_sum / static_cast<double>(samples.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return ev;
}

TrainResult train(const ModelSpec& spec, const HyperParams& hp, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, std::uint64_t seed,
                  const TrainOptions& options) {
  hp.validate();
  if (train_set.empty())
    throw DataError("training set is empty");
  if (val_set.empty())
    throw DataError("validation set is empty");

  TrainResult result{build(spec, derive_seed(seed, "init")), TrainLog{}};
  Model& model = result.model;
  result.log.seed = seed;

  Rng shuffler(derive_seed(seed, "shuffle"));
  const std::uint64_t dropout_seed = derive_seed(seed, "dropout");
  std::uint64_t step = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> labels;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffler.shuffle(std::span(order));
    model.set_mode(Mode::train);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      labels.clear();
      for (std::size_t i : idx)
        labels.push_back(index_of(train_set[i].label));

      ForwardResult fw = forward(model, make_batch(train_set, idx), derive_seed(dropout_seed, step++));
      LossAndGrad lg = cross_entropy(fw.scores, labels);
      if (!std::isfinite(lg.loss))
        throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      loss_sum += lg.loss * static_cast<double>(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r)
        correct += argmax_row(fw.scores, r) == labels[r];

      apply_sgd(model, backward(model, fw.tape, lg.grad), hp);
    }

    model.set_mode(Mode::eval);
    const Evaluation val = evaluate(model, val_set);
    if (!std::isfinite(val.loss))
      throw NumericError("validation loss became non-finite at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.records.push_back(rec);
    result.log.epoch_seconds.push_back(seconds);
    if (options.on_epoch)
      options.on_epoch(rec, seconds);
  }
  return result;
}

} // namespace fabnet
