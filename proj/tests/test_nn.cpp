#include "gradcheck.hpp"
#include "oracles.hpp"

#include "fabnet/error.hpp"
#include "fabnet/model.hpp"
#include "fabnet/optimize.hpp"

#include <doctest.h>

#include <numeric>

using namespace fabnet;

namespace {

ModelSpec conv_spec() {
  ModelSpec s;
  s.input = {2, 6, 6};
  s.classes = 3;
  s.layers = {ConvLayer{3, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2}, FlattenLayer{},
              DenseLayer{5, 27}, SigmoidLayer{}, DropoutLayer{0.3}, DenseLayer{3, 0},
              SoftmaxOutput{}};
  return s;
}

std::vector<std::size_t> labels_for(std::size_t n) {
  std::vector<std::size_t> l(n);
  for (std::size_t i = 0; i < n; ++i)
    l[i] = i % 3;
  return l;
}

} // namespace

TEST_CASE("model spec validation") {
  CHECK_NOTHROW(validate(conv_spec()));
  ModelSpec bad = conv_spec();
  std::get<DenseLayer>(bad.layers[4]).inputs = 30;
  try {
    build(bad, 1);
    FAIL("expected a shape-chain error");
  } catch (const ShapeChainError& e) {
    CHECK(e.layer_index() == 4);
  }
  ModelSpec no_flatten = conv_spec();
  no_flatten.layers.erase(no_flatten.layers.begin() + 3);
  CHECK_THROWS_AS(build(no_flatten, 1), ShapeChainError);
  ModelSpec no_output = conv_spec();
  no_output.layers.pop_back();
  CHECK_THROWS_AS(validate(no_output), ShapeChainError);
  ModelSpec two_outputs = conv_spec();
  two_outputs.layers.insert(two_outputs.layers.end() - 1, SoftmaxOutput{});
  CHECK_THROWS_AS(validate(two_outputs), ShapeChainError);
  ModelSpec bad_p = conv_spec();
  std::get<DropoutLayer>(bad_p.layers[6]).p = 1.0;
  CHECK_THROWS_AS(validate(bad_p), ShapeChainError);
  ModelSpec wrong_k = conv_spec();
  wrong_k.classes = 4;
  CHECK_THROWS_AS(validate(wrong_k), ShapeChainError);
}

TEST_CASE("model spec text round trip") {
  for (const ModelSpec& s :
       {conv_spec(), SpecTemplate{}.instantiate(2, 0.25, Activation::sigmoid)}) {
    const std::string text = model_spec_to_text(s);
    CHECK(parse_model_spec(text) == s);
    CHECK(model_spec_to_text(parse_model_spec(text)) == text);
  }
  CHECK_THROWS_AS(layer_from_text("conv filters=8 bogus=1"), ConfigError);
  CHECK_THROWS_AS(layer_from_text("wormhole"), ConfigError);
}

TEST_CASE("reference template chains at desk resolutions") {
  for (std::size_t side : {32, 64}) {
    SpecTemplate t;
    t.input = {3, side, side};
    for (std::size_t depth : {1, 2, 3}) {
      const auto shapes = validate(t.instantiate(depth, 0.5, Activation::relu));
      CHECK(shapes.back() == Shape{3});
    }
  }
}

TEST_CASE("build is seeded") {
  const Model a = build(conv_spec(), 1), b = build(conv_spec(), 1), c = build(conv_spec(), 2);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameter_count(); ++i) {
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
    differs = differs || !(a.parameters()[i].value == c.parameters()[i].value);
  }
  CHECK(differs);
  for (const auto& p : a.parameters()) {
    if (!p.decays) {
      for (double v : p.value.data())
        CHECK(v == 0.0);
    }
  }
  // He bound for the first conv: fan_in = 2 * 3 * 3
  const double bound = std::sqrt(6.0 / 18.0);
  for (double v : a.parameters()[0].value.data())
    CHECK(std::abs(v) <= bound);
}

TEST_CASE("forward") {
  Model m = build(conv_spec(), 3);
  Rng rng(4);
  const Tensor x = oracle::random_tensor({4, 2, 6, 6}, rng);

  SUBCASE("softmax rows are distributions") {
    const ForwardResult r = forward(m, x, 9);
    for (std::size_t n = 0; n < 4; ++n) {
      double sum = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(r.scores.at(n, k) >= 0.0);
        CHECK(r.scores.at(n, k) <= 1.0);
        sum += r.scores.at(n, k);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
  SUBCASE("eval mode is deterministic and ignores the seed") {
    m.set_mode(Mode::eval);
    const ForwardResult a = forward(m, x, 1), b = forward(m, x, 2);
    CHECK(a.scores == b.scores);
    for (const auto& mask : a.tape.masks)
      CHECK(mask.empty());
  }
  SUBCASE("train mode uses the seed for dropout") {
    m.set_mode(Mode::train);
    CHECK(forward(m, x, 1).scores == forward(m, x, 1).scores);
    CHECK(!(forward(m, x, 1).scores == forward(m, x, 2).scores));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(forward(m, Tensor({1, 3, 6, 6}), 0), DimensionError);
  }
}

TEST_CASE("single dense layer gives the softmax of its affine map") {
  ModelSpec s;
  s.input = {1, 1, 3};
  s.classes = 3;
  s.layers = {FlattenLayer{}, DenseLayer{3, 0}, SoftmaxOutput{}};
  Model m = build(s, 1);
  Tensor& w = m.parameter(0).value;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      w.at(i, j) = i == j ? 1.0 : 0.0;
  m.set_mode(Mode::eval);
  const Tensor x({2, 1, 1, 3}, {0.5, -1.0, 2.0, 3.0, 3.0, -7.0});
  const Tensor scores = forward(m, x, 0).scores;
  for (std::size_t n = 0; n < 2; ++n) {
    const auto expect =
        oracle::softmax({x[n * 3 + 0], x[n * 3 + 1], x[n * 3 + 2]});
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(scores.at(n, k) == doctest::Approx(expect[k]).epsilon(1e-14));
  }
}

TEST_CASE("softmax preserves the logit argmax") {
  ModelSpec s;
  s.input = {1, 1, 4};
  s.classes = 3;
  s.layers = {FlattenLayer{}, DenseLayer{3, 0}, SoftmaxOutput{}};
  Model m = build(s, 5);
  m.set_mode(Mode::eval);
  Rng rng(6);
  const Tensor x = oracle::random_tensor({50, 1, 1, 4}, rng, -3, 3);
  const ForwardResult r = forward(m, x, 0);
  const Tensor logits = r.tape.inputs.back();
  for (std::size_t n = 0; n < 50; ++n) {
    std::size_t a = 0, b = 0;
    for (std::size_t k = 1; k < 3; ++k) {
      if (r.scores.at(n, k) > r.scores.at(n, a))
        a = k;
      if (logits.at(n, k) > logits.at(n, b))
        b = k;
    }
    CHECK(a == b);
  }
}

TEST_CASE("dropout drops at rate p and rescales survivors") {
  ModelSpec s;
  s.input = {1, 100, 100};
  s.classes = 10000;
  s.layers = {FlattenLayer{}, DropoutLayer{0.3}, SoftmaxOutput{}};
  Model m = build(s, 0);
  const ForwardResult r = forward(m, Tensor({1, 1, 100, 100}, 1.0), 77);
  const auto& mask = r.tape.masks[1];
  REQUIRE(mask.size() == 10000);
  std::size_t zeros = 0;
  for (double v : mask) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(1.0 / 0.7));
  }
  CHECK(std::abs(static_cast<double>(zeros) / 1e4 - 0.3) <= 0.02);
}

TEST_CASE("backward") {
  Model m = build(conv_spec(), 11);
  Rng rng(12);
  const Tensor x = oracle::random_tensor({3, 2, 6, 6}, rng);

  SUBCASE("zero loss gradient") {
    const ForwardResult r = forward(m, x, 1);
    const GradientSet g = backward(m, r.tape, Tensor({3, 3}));
    for (const auto& t : g.params)
      for (double v : t.data())
        CHECK(v == 0.0);
  }
  SUBCASE("gradient set shapes") {
    const ForwardResult r = forward(m, x, 1);
    const GradientSet g = backward(m, r.tape, cross_entropy(r.scores, labels_for(3)).grad);
    REQUIRE(g.params.size() == m.parameter_count());
    for (std::size_t i = 0; i < g.params.size(); ++i)
      CHECK(g.params[i].shape() == m.parameters()[i].value.shape());
    CHECK(g.input.shape() == x.shape());
  }
  SUBCASE("stale tape") {
    const ForwardResult r = forward(m, x, 1);
    m.parameter(0).value[0] += 1e-3;
    CHECK_THROWS_AS(backward(m, r.tape, Tensor({3, 3})), StaleTapeError);
  }
  SUBCASE("finite differences, train mode with a fixed dropout mask") {
    const auto gc = oracle::check_gradients(m, x, labels_for(3), 5);
    CHECK(gc.worst_param < 1e-4);
    CHECK(gc.worst_input < 1e-4);
  }
  SUBCASE("finite differences, eval mode") {
    m.set_mode(Mode::eval);
    const auto gc = oracle::check_gradients(m, x, labels_for(3), 5);
    CHECK(gc.worst_param < 1e-4);
    CHECK(gc.worst_input < 1e-4);
  }
}

TEST_CASE("duplicated sample leaves the averaged gradient unchanged") {
  Model m = build(conv_spec(), 13);
  m.set_mode(Mode::eval);
  Rng rng(14);
  const Tensor one = oracle::random_tensor({1, 2, 6, 6}, rng);
  Tensor two({2, 2, 6, 6});
  for (std::size_t i = 0; i < two.size(); ++i)
    two[i] = one[i % one.size()];
  const std::vector<std::size_t> l1{2}, l2{2, 2};
  const ForwardResult r1 = forward(m, one, 0), r2 = forward(m, two, 0);
  const GradientSet g1 = backward(m, r1.tape, cross_entropy(r1.scores, l1).grad);
  const GradientSet g2 = backward(m, r2.tape, cross_entropy(r2.scores, l2).grad);
  for (std::size_t p = 0; p < g1.params.size(); ++p)
    for (std::size_t i = 0; i < g1.params[p].size(); ++i)
      CHECK(std::abs(g1.params[p][i] - g2.params[p][i]) <= 1e-12);
}

TEST_CASE("sigmoid output variant is differentiable too") {
  ModelSpec s;
  s.input = {1, 4, 4};
  s.classes = 3;
  s.layers = {ConvLayer{2, 2, 2, 0}, SigmoidLayer{}, FlattenLayer{}, DenseLayer{3, 0},
              SigmoidOutput{}};
  Rng rng(15);
  const auto gc = oracle::check_gradients(build(s, 16), oracle::random_tensor({2, 1, 4, 4}, rng),
                                          {0, 2}, 0);
  CHECK(gc.worst_param < 1e-4);
  CHECK(gc.worst_input < 1e-4);
}
