#include "fabnet/layers.hpp"

#include "fabnet/error.hpp"
#include "fabnet/keyvalue.hpp"
#include "fabnet/ops.hpp"

#include <map>
#include <sstream>

namespace fabnet {

namespace {

template <class... Ts> struct overloaded : Ts... {
  using Ts::operator()...;
};

using Fields = std::map<std::string, std::string>;

std::size_t take_size(Fields& fields, const std::string& key, std::size_t fallback,
                      const std::string& kind) {
  auto it = fields.find(key);
  if (it == fields.end())
    return fallback;
  const long long v = parse_int(it->second, kind + "." + key);
  if (v < 0)
    throw ConfigError(kind + "." + key + " must be non-negative");
  fields.erase(it);
  return static_cast<std::size_t>(v);
}

} // namespace

std::string layer_kind(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const ConvLayer&) { return "conv"; },
                        [](const MaxPoolLayer&) { return "maxpool"; },
                        [](const ReluLayer&) { return "relu"; },
                        [](const SigmoidLayer&) { return "sigmoid"; },
                        [](const DropoutLayer&) { return "dropout"; },
                        [](const FlattenLayer&) { return "flatten"; },
                        [](const DenseLayer&) { return "dense"; },
                        [](const SoftmaxOutput&) { return "softmax-output"; },
                        [](const SigmoidOutput&) { return "sigmoid-output"; },
                    },
                    layer);
}

bool is_output_layer(const LayerSpec& layer) {
  return std::holds_alternative<SoftmaxOutput>(layer) ||
         std::holds_alternative<SigmoidOutput>(layer);
}

std::string layer_to_text(const LayerSpec& layer) {
  std::string out = layer_kind(layer);
  std::visit(overloaded{
                 [&](const ConvLayer& l) {
                   out += " filters=" + std::to_string(l.filters) +
                          " kernel=" + std::to_string(l.kernel) +
                          " stride=" + std::to_string(l.stride) +
                          " padding=" + std::to_string(l.padding);
                 },
                 [&](const MaxPoolLayer& l) {
                   out += " window=" + std::to_string(l.window) +
                          " stride=" + std::to_string(l.stride);
                 },
                 [&](const DropoutLayer& l) { out += " p=" + format_double(l.p); },
                 [&](const DenseLayer& l) {
                   out += " units=" + std::to_string(l.units);
                   if (l.inputs)
                     out += " inputs=" + std::to_string(l.inputs);
                 },
                 [](const auto&) {},
             },
             layer);
  return out;
}

LayerSpec layer_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  Fields fields;
  for (std::string tok; in >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("layer '" + text + "': expected key=value, got '" + tok + "'");
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }

  LayerSpec layer;
  if (kind == "conv") {
    ConvLayer l;
    l.filters = take_size(fields, "filters", l.filters, kind);
    l.kernel = take_size(fields, "kernel", l.kernel, kind);
    l.stride = take_size(fields, "stride", l.stride, kind);
    l.padding = take_size(fields, "padding", l.padding, kind);
    layer = l;
  } else if (kind == "maxpool") {
    MaxPoolLayer l;
    l.window = take_size(fields, "window", l.window, kind);
    l.stride = take_size(fields, "stride", l.stride, kind);
    layer = l;
  } else if (kind == "relu") {
    layer = ReluLayer{};
  } else if (kind == "sigmoid") {
    layer = SigmoidLayer{};
  } else if (kind == "dropout") {
    DropoutLayer l;
    if (auto it = fields.find("p"); it != fields.end()) {
      l.p = parse_double(it->second, "dropout.p");
      fields.erase(it);
    }
    layer = l;
  } else if (kind == "flatten") {
    layer = FlattenLayer{};
  } else if (kind == "dense") {
    DenseLayer l;
    l.units = take_size(fields, "units", 0, kind);
    l.inputs = take_size(fields, "inputs", 0, kind);
    layer = l;
  } else if (kind == "softmax-output") {
    layer = SoftmaxOutput{};
  } else if (kind == "sigmoid-output") {
    layer = SigmoidOutput{};
  } else {
    throw ConfigError("unknown layer kind '" + kind + "'");
  }
  if (!fields.empty())
    throw ConfigError("layer '" + text + "': unknown field '" + fields.begin()->first + "'");
  return layer;
}

std::vector<Shape> validate(const ModelSpec& spec) {
  if (spec.input.size() != 3 || shape_volume(spec.input) == 0)
    throw ShapeChainError(0, "model input must be [C,H,W] with positive sizes, got " +
                                 shape_string(spec.input));
  if (spec.classes < 1)
    throw ShapeChainError(0, "model class count must be positive");
  if (spec.layers.empty() || !is_output_layer(spec.layers.back()))
    throw ShapeChainError(spec.layers.empty() ? 0 : spec.layers.size() - 1,
                          "model must end with exactly one output layer");

  std::vector<Shape> shapes;
  Shape cur = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + layer_kind(layer) + "): ";
    auto fail = [&](const std::string& why) { throw ShapeChainError(i, where + why); };
    try {
      std::visit(
          overloaded{
              [&](const ConvLayer& l) {
                if (cur.size() != 3)
                  fail("expects [C,H,W] input, got " + shape_string(cur));
                if (l.filters == 0 || l.kernel == 0 || l.stride == 0)
                  fail("filters, kernel and stride must be positive");
                cur = {l.filters, output_extent(cur[1], l.kernel, l.stride, l.padding, "height"),
                       output_extent(cur[2], l.kernel, l.stride, l.padding, "width")};
              },
              [&](const MaxPoolLayer& l) {
                if (cur.size() != 3)
                  fail("expects [C,H,W] input, got " + shape_string(cur));
                if (l.window > cur[1] || l.window > cur[2])
                  fail("window " + std::to_string(l.window) + " exceeds input " +
                       shape_string(cur));
                cur = {cur[0], output_extent(cur[1], l.window, l.stride, 0, "height"),
                       output_extent(cur[2], l.window, l.stride, 0, "width")};
              },
              [&](const DropoutLayer& l) {
                if (!(l.p >= 0.0 && l.p < 1.0))
                  fail("dropout probability must lie in [0, 1), got " + format_double(l.p));
              },
              [&](const FlattenLayer&) { cur = {shape_volume(cur)}; },
              [&](const DenseLayer& l) {
                if (cur.size() != 1)
                  fail("expects a flat input, got " + shape_string(cur) + " (missing flatten?)");
                if (l.units == 0)
                  fail("units must be positive");
                if (l.inputs != 0 && l.inputs != cur[0])
                  fail("declares " + std::to_string(l.inputs) + " inputs but receives " +
                       std::to_string(cur[0]));
                cur = {l.units};
              },
              [&](const auto& out) {
                using T = std::decay_t<decltype(out)>;
                if constexpr (std::is_same_v<T, SoftmaxOutput> ||
                              std::is_same_v<T, SigmoidOutput>) {
                  if (i + 1 != spec.layers.size())
                    fail("output layer must be last");
                  if (cur != Shape{spec.classes})
                    fail("receives " + shape_string(cur) + " but the model has " +
                         std::to_string(spec.classes) + " classes");
                }
              },
          },
          layer);
    } catch (const GeometryError& e) {
      fail(e.what());
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::string model_spec_to_text(const ModelSpec& spec) {
  KeyValueDoc doc;
  std::string input;
  for (std::size_t i = 0; i < spec.input.size(); ++i)
    input += (i ? "," : "") + std::to_string(spec.input[i]);
  doc.set("input", input);
  doc.set("classes", std::to_string(spec.classes));
  doc.set("layers", std::to_string(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    doc.set("layer." + std::to_string(i), layer_to_text(spec.layers[i]));
  return doc.to_text();
}

ModelSpec parse_model_spec(const std::string& text) {
  const KeyValueDoc doc = KeyValueDoc::parse(text, "<model spec>");
  ModelSpec spec;
  for (const auto& dim : split_list(doc.require("input"))) {
    const long long v = parse_int(dim, "input");
    if (v <= 0)
      throw ConfigError("model input dimensions must be positive");
    spec.input.push_back(static_cast<std::size_t>(v));
  }
  const long long classes = parse_int(doc.require("classes"), "classes");
  const long long count = parse_int(doc.require("layers"), "layers");
  if (classes <= 0 || count < 0)
    throw ConfigError("model spec: classes must be positive and layers non-negative");
  spec.classes = static_cast<std::size_t>(classes);
  for (long long i = 0; i < count; ++i)
    spec.layers.push_back(layer_from_text(doc.require("layer." + std::to_string(i))));
  if (doc.entries().size() != static_cast<std::size_t>(count) + 3)
    throw ConfigError("model spec: unexpected keys beyond layer." + std::to_string(count - 1));
  return spec;
}

std::string activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "sigmoid";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu")
    return Activation::relu;
  if (name == "sigmoid")
    return Activation::sigmoid;
  throw ConfigError("activation must be relu or sigmoid, got '" + name + "'");
}

ModelSpec SpecTemplate::instantiate(std::size_t hidden_layers, double dropout_p,
                                    Activation activation) const {
  auto act = [&]() -> LayerSpec {
    return activation == Activation::relu ? LayerSpec{ReluLayer{}} : LayerSpec{SigmoidLayer{}};
  };
  ModelSpec spec;
  spec.input = input;
  spec.classes = classes;
  for (std::size_t filters : conv_filters) {
    spec.layers.push_back(ConvLayer{filters, kernel, 1, kernel / 2});
    spec.layers.push_back(act());
    spec.layers.push_back(MaxPoolLayer{2, 2});
  }
  spec.layers.push_back(FlattenLayer{});
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    spec.layers.push_back(DenseLayer{dense_units, 0});
    spec.layers.push_back(act());
    spec.layers.push_back(DropoutLayer{dropout_p});
  }
  spec.layers.push_back(DenseLayer{classes, 0});
  if (sigmoid_output)
    spec.layers.push_back(SigmoidOutput{});
  else
    spec.layers.push_back(SoftmaxOutput{});
  return spec;
}

} // namespace fabnet
