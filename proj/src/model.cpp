#include "fabnet/model.hpp"

#include "fabnet/error.hpp"
#include "fabnet/random.hpp"

#include <atomic>
#include <cmath>

namespace fabnet {

namespace {

template <class... Ts> struct overloaded : Ts... {
  using Ts::operator()...;
};

std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

ConvGeom conv_geom(const ConvLayer& l) {
  return ConvGeom{l.stride, l.padding, l.kernel, l.kernel};
}

// Parameter shapes per layer in spec order: {weight, bias} for conv/dense.
std::vector<std::pair<Shape, Shape>> param_shapes(const ModelSpec& spec,
                                                  const std::vector<Shape>& shapes,
                                                  std::vector<int>& weight_index) {
  std::vector<std::pair<Shape, Shape>> out;
  weight_index.assign(spec.layers.size(), -1);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const Shape& in = i == 0 ? spec.input : shapes[i - 1];
    if (const auto* c = std::get_if<ConvLayer>(&spec.layers[i])) {
      weight_index[i] = static_cast<int>(2 * out.size());
      out.push_back({{c->filters, in[0], c->kernel, c->kernel}, {c->filters}});
    } else if (const auto* d = std::get_if<DenseLayer>(&spec.layers[i])) {
      weight_index[i] = static_cast<int>(2 * out.size());
      out.push_back({{in[0], d->units}, {d->units}});
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    double* row = out.data().data() + r * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j)
      mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < k; ++j)
      row[j] /= sum;
  }
  return out;
}

Tensor multiply(const Tensor& a, std::span<const double> b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] *= b[i];
  return out;
}

} // namespace

Parameter& Model::parameter(std::size_t index) {
  version_ = next_version();
  return params_.at(index);
}

Model build(const ModelSpec& spec, std::uint64_t seed) {
  Model m;
  m.spec_ = spec;
  m.shapes_ = validate(spec);
  const auto shapes = param_shapes(spec, m.shapes_, m.weight_index_);
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const int wi = m.weight_index_[li];
    if (wi < 0)
      continue;
    const auto& [wshape, bshape] = shapes[static_cast<std::size_t>(wi) / 2];
    const std::size_t fan_in = shape_volume(wshape) / wshape[wshape.size() == 4 ? 0 : 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(wi)));
    Tensor w(wshape);
    for (double& v : w.data())
      v = rng.uniform(-bound, bound);
    m.params_.push_back({"layer" + std::to_string(li) + ".weight", std::move(w), true});
    m.params_.push_back({"layer" + std::to_string(li) + ".bias", Tensor(bshape), false});
  }
  m.version_ = next_version();
  return m;
}

Model assemble(const ModelSpec& spec, std::vector<Tensor> values) {
  Model m;
  m.spec_ = spec;
  m.shapes_ = validate(spec);
  const auto shapes = param_shapes(spec, m.shapes_, m.weight_index_);
  if (values.size() != 2 * shapes.size())
    throw DimensionError("model needs " + std::to_string(2 * shapes.size()) +
                         " parameter tensors, got " + std::to_string(values.size()));
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const int wi = m.weight_index_[li];
    if (wi < 0)
      continue;
    const auto& [wshape, bshape] = shapes[static_cast<std::size_t>(wi) / 2];
    Tensor& w = values[static_cast<std::size_t>(wi)];
    Tensor& b = values[static_cast<std::size_t>(wi) + 1];
    if (w.shape() != wshape || b.shape() != bshape)
      throw DimensionError("layer " + std::to_string(li) + " parameters have shapes " +
                           shape_string(w.shape()) + "/" + shape_string(b.shape()) +
                           ", expected " + shape_string(wshape) + "/" + shape_string(bshape));
    m.params_.push_back({"layer" + std::to_string(li) + ".weight", std::move(w), true});
    m.params_.push_back({"layer" + std::to_string(li) + ".bias", std::move(b), false});
  }
  m.version_ = next_version();
  return m;
}

namespace {

Tensor run(const Model& model, const Tensor& batch, std::uint64_t seed, TapeCache* tape) {
  const ModelSpec& spec = model.spec();
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != spec.input)
    throw DimensionError("batch shape " + shape_string(batch.shape()) +
                         " does not match model input [N," +
                         shape_string(spec.input).substr(1));
  const std::size_t n = batch.dim(0);
  const bool training = model.mode() == Mode::train;
  const auto& params = model.parameters();

  if (tape) {
    tape->version = model.version();
    tape->mode = model.mode();
    tape->inputs.clear();
    tape->argmax.assign(spec.layers.size(), {});
    tape->masks.assign(spec.layers.size(), {});
  }

  Tensor x = batch;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const int wi = model.weight_index(i);
    Tensor y = std::visit(
        overloaded{
            [&](const ConvLayer& l) {
              return conv2d(x, params[wi].value, params[wi + 1].value, conv_geom(l));
            },
            [&](const MaxPoolLayer& l) {
              PoolResult r = maxpool2d(x, l.window, l.stride);
              if (tape)
                tape->argmax[i] = std::move(r.argmax);
              return std::move(r.output);
            },
            [&](const ReluLayer&) { return relu(x); },
            [&](const SigmoidLayer&) { return sigmoid(x); },
            [&](const DropoutLayer& l) {
              if (!training || l.p == 0.0)
                return x;
              Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
              const double keep = 1.0 / (1.0 - l.p);
              std::vector<double> mask(x.size());
              for (double& m : mask)
                m = rng.bernoulli(l.p) ? 0.0 : keep;
              Tensor out = multiply(x, mask);
              if (tape)
                tape->masks[i] = std::move(mask);
              return out;
            },
            [&](const FlattenLayer&) { return x.reshaped({n, x.size() / n}); },
            [&](const DenseLayer&) {
              return add_bias(matmul(x, params[wi].value), params[wi + 1].value);
            },
            [&](const SoftmaxOutput&) { return softmax_rows(x); },
            [&](const SigmoidOutput&) { return sigmoid(x); },
        },
        spec.layers[i]);
    if (tape)
      tape->inputs.push_back(std::move(x));
    x = std::move(y);
  }
  if (tape)
    tape->output = x;
  return x;
}

} // namespace

ForwardResult forward(const Model& model, const Tensor& batch, std::uint64_t seed) {
  ForwardResult r;
  r.scores = run(model, batch, seed, &r.tape);
  return r;
}

Tensor predict_scores(const Model& model, const Tensor& batch) {
  if (model.mode() == Mode::eval)
    return run(model, batch, 0, nullptr);
  Model view = model;
  view.set_mode(Mode::eval);
  return run(view, batch, 0, nullptr);
}

GradientSet backward(const Model& model, const TapeCache& tape, const Tensor& loss_grad) {
  if (tape.version != model.version())
    throw StaleTapeError("tape was recorded against different parameter values; rerun forward");
  const ModelSpec& spec = model.spec();
  if (tape.inputs.size() != spec.layers.size())
    throw StaleTapeError("tape does not belong to this model");
  if (loss_grad.shape() != tape.output.shape())
    throw DimensionError("loss gradient shape " + shape_string(loss_grad.shape()) +
                         " differs from score shape " + shape_string(tape.output.shape()));

  const auto& params = model.parameters();
  GradientSet grads;
  grads.params.reserve(params.size());
  for (const auto& p : params)
    grads.params.emplace_back(p.value.shape());

  Tensor g = loss_grad;
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const Tensor& x = tape.inputs[i];
    const int wi = model.weight_index(i);
    g = std::visit(
        overloaded{
            [&](const ConvLayer& l) {
              Conv2dGrads cg = conv2d_backward(x, params[wi].value, conv_geom(l), g);
              grads.params[wi] = std::move(cg.kernels);
              grads.params[wi + 1] = std::move(cg.bias);
              return std::move(cg.input);
            },
            [&](const MaxPoolLayer&) { return maxpool2d_backward(g, tape.argmax[i], x.shape()); },
            [&](const ReluLayer&) {
              Tensor out = g;
              for (std::size_t j = 0; j < out.size(); ++j)
                if (!(x[j] > 0.0))
                  out[j] = 0.0;
              return out;
            },
            [&](const SigmoidLayer&) {
              Tensor out = g;
              for (std::size_t j = 0; j < out.size(); ++j) {
                const double s = sigmoid(x[j]);
                out[j] *= s * (1.0 - s);
              }
              return out;
            },
            [&](const DropoutLayer&) {
              return tape.masks[i].empty() ? g : multiply(g, tape.masks[i]);
            },
            [&](const FlattenLayer&) { return g.reshaped(x.shape()); },
            [&](const DenseLayer&) {
              grads.params[wi] = matmul(transpose(x), g);
              Tensor db(params[wi + 1].value.shape());
              const std::size_t k = db.size();
              for (std::size_t r = 0; r < g.dim(0); ++r)
                for (std::size_t j = 0; j < k; ++j)
                  db[j] += g.at(r, j);
              grads.params[wi + 1] = std::move(db);
              return matmul(g, transpose(params[wi].value));
            },
            [&](const SoftmaxOutput&) {
              const Tensor& s = tape.output;
              Tensor out = g;
              const std::size_t n = s.dim(0), k = s.dim(1);
              for (std::size_t r = 0; r < n; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < k; ++j)
                  dot += g.at(r, j) * s.at(r, j);
                for (std::size_t j = 0; j < k; ++j)
                  out.at(r, j) = s.at(r, j) * (g.at(r, j) - dot);
              }
              return out;
            },
            [&](const SigmoidOutput&) {
              const Tensor& s = tape.output;
              Tensor out = g;
              for (std::size_t j = 0; j < out.size(); ++j)
                out[j] *= s[j] * (1.0 - s[j]);
              return out;
            },
        },
        spec.layers[i]);
  }
  grads.input = std::move(g);
  return grads;
}

} // namespace fabnet
