#include "gradcheck.hpp"
#include "oracles.hpp"

#include "fabnet/checkpoint.hpp"
#include "fabnet/error.hpp"
#include "fabnet/optimize.hpp"
#include "fabnet/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace fabnet;

namespace {

ModelSpec toy_spec(double dropout = 0.0) {
  ModelSpec s;
  s.input = {1, 4, 4};
  s.classes = 3;
  s.layers = {ConvLayer{2, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2}, FlattenLayer{},
              DenseLayer{6, 0},      ReluLayer{}, DropoutLayer{dropout}, DenseLayer{3, 0},
              SoftmaxOutput{}};
  return s;
}

std::vector<Sample> tiny_corpus(std::size_t per_class, std::uint64_t seed) {
  SynthParams p;
  p.size = 32;
  std::vector<Sample> out;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out.push_back(synth_fabric(to_class_label(static_cast<long long>(c)), p,
                                 derive_seed(seed, i * 3 + c))
                        .sample);
  return out;
}

} // namespace

TEST_CASE("cross entropy") {
  SUBCASE("one-hot scores") {
    const Tensor s = Tensor::from_rows({{1, 0, 0}, {0, 0, 1}});
    const std::vector<std::size_t> labels{0, 2};
    CHECK(cross_entropy(s, labels).loss < 1e-9);
  }
  SUBCASE("uniform scores") {
    const Tensor s({4, 3}, 1.0 / 3.0);
    const std::vector<std::size_t> labels{0, 1, 2, 1};
    CHECK(std::abs(cross_entropy(s, labels).loss - std::log(3.0)) < 1e-9);
  }
  SUBCASE("gradient against finite differences") {
    Rng rng(1);
    Tensor s = oracle::random_tensor({2, 3}, rng, 0.05, 0.95);
    const std::vector<std::size_t> labels{1, 2};
    const Tensor analytic = cross_entropy(s, labels).grad;
    const auto numeric =
        oracle::finite_difference(s, [&] { return cross_entropy(s, labels).loss; });
    for (std::size_t i = 0; i < numeric.size(); ++i)
      CHECK(oracle::relative_error(analytic[i], numeric[i]) < 1e-6);
  }
  SUBCASE("label out of range") {
    const std::vector<std::size_t> labels{3};
    CHECK_THROWS_AS(cross_entropy(Tensor({1, 3}, 0.3), labels), DataError);
  }
}

TEST_CASE("sgd step") {
  HyperParams hp;
  SUBCASE("scalar arithmetic") {
    ModelSpec s;
    s.input = {1, 1, 1};
    s.classes = 1;
    s.layers = {FlattenLayer{}, DenseLayer{1, 0}, SigmoidOutput{}};
    Model m = build(s, 0);
    m.parameter(0).value[0] = 2.0;
    GradientSet g{{Tensor({1, 1}, 1.0), Tensor({1})}, Tensor({1, 1, 1, 1})};
    hp.learning_rate = 0.1;
    hp.l2_lambda = 0.0;
    m = sgd_step(std::move(m), g, hp);
    CHECK(m.parameters()[0].value[0] == doctest::Approx(1.9).epsilon(1e-15));
  }
  Model m = build(toy_spec(), 3);
  GradientSet zero;
  for (const auto& p : m.parameters())
    zero.params.emplace_back(p.value.shape());
  SUBCASE("zero learning rate is a null step") {
    Rng rng(4);
    GradientSet g;
    for (const auto& p : m.parameters())
      g.params.push_back(oracle::random_tensor(p.value.shape(), rng));
    hp.learning_rate = 0.0;  // bypasses HyperParams::validate on purpose
    const Model after = sgd_step(m, g, hp);
    for (std::size_t i = 0; i < m.parameter_count(); ++i)
      CHECK(after.parameters()[i].value == m.parameters()[i].value);
  }
  SUBCASE("pure decay shrinks weights by (1 - lr * lambda), biases untouched") {
    for (std::size_t i = 0; i < m.parameter_count(); ++i)
      for (double& v : m.parameter(i).value.data())
        v += 0.5;
    hp.learning_rate = 0.1;
    hp.l2_lambda = 0.01;
    const Model after = sgd_step(m, zero, hp);
    for (std::size_t i = 0; i < m.parameter_count(); ++i) {
      const auto& before = m.parameters()[i];
      for (std::size_t j = 0; j < before.value.size(); ++j) {
        const double w = before.value[j], w2 = after.parameters()[i].value[j];
        if (before.decays) {
          CHECK(w2 == doctest::Approx(w * (1.0 - 0.001)).epsilon(1e-14));
          CHECK(std::abs(w2) < std::abs(w));
        } else {
          CHECK(w2 == w);
        }
      }
    }
  }
  SUBCASE("sum of squared weights strictly decreases under decay") {
    hp.learning_rate = 0.05;
    hp.l2_lambda = 1e-3;
    auto sumsq = [](const Model& model) {
      double s = 0.0;
      for (const auto& p : model.parameters())
        if (p.decays)
          for (double v : p.value.data())
            s += v * v;
      return s;
    };
    double prev = sumsq(m);
    for (int step = 0; step < 20; ++step) {
      m = sgd_step(std::move(m), zero, hp);
      const double now = sumsq(m);
      CHECK(now < prev);
      prev = now;
    }
  }
  SUBCASE("mismatched gradients") {
    GradientSet bad = zero;
    bad.params.pop_back();
    CHECK_THROWS_AS(sgd_step(m, bad, hp), DimensionError);
  }
}

TEST_CASE("a small step lowers a single sample's loss") {
  Rng rng(20);
  HyperParams hp;
  hp.learning_rate = 1e-4;
  for (int model_seed = 0; model_seed < 5; ++model_seed) {
    const Tensor x = oracle::random_tensor({1, 1, 4, 4}, rng);
    const std::vector<std::size_t> label{static_cast<std::size_t>(model_seed % 3)};
    bool decreased = false;
    // dropout draws a fresh mask per attempt
    for (int attempt = 0; attempt < 5 && !decreased; ++attempt) {
      Model m = build(toy_spec(0.2), static_cast<std::uint64_t>(model_seed));
      const std::uint64_t seed = static_cast<std::uint64_t>(attempt);
      const ForwardResult fw = forward(m, x, seed);
      const LossAndGrad lg = cross_entropy(fw.scores, label);
      m = sgd_step(std::move(m), backward(m, fw.tape, lg.grad), hp);
      decreased = cross_entropy(forward(m, x, seed).scores, label).loss < lg.loss;
    }
    CHECK(decreased);
  }
}

TEST_CASE("hyperparameter documents") {
  HyperParams hp;
  hp.learning_rate = 0.003;
  hp.batch_size = 16;
  hp.dropout_p = 0.25;
  hp.activation = Activation::sigmoid;
  hp.hidden_layers = 2;
  CHECK(HyperParams::from_doc(KeyValueDoc::parse(hp.to_doc().to_text())) == hp);
  CHECK_THROWS_AS(HyperParams::from_doc(KeyValueDoc::parse("epochs = 0")), ConfigError);
  CHECK_THROWS_AS(HyperParams::from_doc(KeyValueDoc::parse("dropout_p = 1")), ConfigError);
  CHECK_THROWS_AS(HyperParams::from_doc(KeyValueDoc::parse("momentum = 0.9")), ConfigError);
  HyperParams zero_epochs;
  zero_epochs.epochs = 0;
  CHECK_THROWS_AS(zero_epochs.validate(), ConfigError);
}

TEST_CASE("training") {
  const auto data = tiny_corpus(3, 1);
  const auto val = tiny_corpus(1, 2);
  SpecTemplate tmpl;
  tmpl.input = {3, 32, 32};
  HyperParams hp;
  hp.epochs = 3;
  hp.batch_size = 4;
  hp.dropout_p = 0.25;
  const ModelSpec spec = instantiate(tmpl, hp);

  SUBCASE("bit-identical logs for identical inputs") {
    const TrainResult a = train(spec, hp, data, val, 7);
    const TrainResult b = train(spec, hp, data, val, 7);
    CHECK(a.log == b.log);
    CHECK(a.log.to_csv() == b.log.to_csv());
    REQUIRE(a.log.records.size() == 3);
    CHECK(a.log.records.front().epoch == 1);
    for (std::size_t i = 0; i < a.model.parameter_count(); ++i)
      CHECK(a.model.parameters()[i].value == b.model.parameters()[i].value);
    CHECK(!(train(spec, hp, data, val, 8).log == a.log));
  }
  SUBCASE("empty datasets") {
    CHECK_THROWS_AS(train(spec, hp, {}, val, 1), DataError);
    CHECK_THROWS_AS(train(spec, hp, data, {}, 1), DataError);
  }
  SUBCASE("curves csv round trip") {
    const TrainResult a = train(spec, hp, data, val, 7);
    CHECK(TrainLog::from_csv(a.log.to_csv()).records == a.log.records);
  }
}

TEST_CASE("checkpoint") {
  Model m = build(toy_spec(0.5), 4);
  m.set_mode(Mode::eval);
  const auto dir = oracle::scratch_dir("ckpt");
  const auto path = dir / "m.fsck";
  save_checkpoint(m, path);
  Rng rng(5);
  const Tensor x = oracle::random_tensor({3, 1, 4, 4}, rng);

  SUBCASE("round trip is exact") {
    const Model back = load_checkpoint(path);
    CHECK(back.spec() == m.spec());
    for (std::size_t i = 0; i < m.parameter_count(); ++i)
      CHECK(back.parameters()[i].value == m.parameters()[i].value);
    CHECK(forward(back, x, 0).scores == forward(m, x, 0).scores);
    CHECK(encode_checkpoint(back) == encode_checkpoint(m));
  }
  auto bytes = encode_checkpoint(m);
  SUBCASE("layout") {
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FSCK");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
  }
  SUBCASE("payload corruption is a digest error") {
    bytes[bytes.size() - 20] ^= 0x01;
    try {
      decode_checkpoint(bytes);
      FAIL("expected digest error");
    } catch (const CheckpointError& e) {
      CHECK(e.fault() == CheckpointFault::digest_mismatch);
    }
  }
  SUBCASE("truncation") {
    bytes.resize(bytes.size() - 9);
    try {
      decode_checkpoint(bytes);
      FAIL("expected truncation error");
    } catch (const CheckpointError& e) {
      CHECK(e.fault() == CheckpointFault::truncated);
    }
  }
  SUBCASE("version") {
    bytes[4] = 2;
    try {
      decode_checkpoint(bytes);
      FAIL("expected version error");
    } catch (const CheckpointError& e) {
      CHECK(e.fault() == CheckpointFault::version_mismatch);
    }
  }
  SUBCASE("magic") {
    bytes[0] = 'X';
    try {
      decode_checkpoint(bytes);
      FAIL("expected magic error");
    } catch (const CheckpointError& e) {
      CHECK(e.fault() == CheckpointFault::bad_magic);
    }
  }
  SUBCASE("different spec") {
    try {
      load_checkpoint(path, toy_spec(0.25));
      FAIL("expected spec mismatch");
    } catch (const CheckpointError& e) {
      CHECK(e.fault() == CheckpointFault::spec_mismatch);
    }
    CHECK_NOTHROW(load_checkpoint(path, toy_spec(0.5)));
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir / "nope.fsck"), IoError);
  }
  std::filesystem::remove_all(dir);
}
