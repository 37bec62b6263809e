#include "oracles.hpp"

#include "fabnet/error.hpp"
#include "fabnet/ops.hpp"

#include <doctest.h>

#include <cmath>

using namespace fabnet;

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>(3)), DimensionError);
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  t.at(1, 2, 3) = 7.0;
  CHECK(t[23] == 7.0);
  CHECK(t.reshaped({6, 4}).at(5, 3) == 7.0);
  CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
}

TEST_CASE("conv2d worked examples") {
  SUBCASE("identity kernel") {
    Rng rng(1);
    const Tensor x = oracle::random_tensor({1, 1, 3, 3}, rng);
    const Tensor y = conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), {1, 0, 1, 1});
    CHECK(y == x);
  }
  SUBCASE("all-ones 2x2 kernel") {
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor y = conv2d(x, Tensor({1, 1, 2, 2}, 1.0), Tensor({1}), {1, 0, 2, 2});
    // oracle-derived
    CHECK(y == oracle::conv2d(x, Tensor({1, 1, 2, 2}, 1.0), Tensor({1}), 1, 0));
    CHECK(y == Tensor({1, 1, 2, 2}, {12, 16, 24, 28}));
  }
  SUBCASE("zero kernel yields the bias") {
    Rng rng(2);
    const Tensor x = oracle::random_tensor({2, 3, 5, 4}, rng);
    const Tensor y = conv2d(x, Tensor({2, 3, 3, 3}), Tensor({2}, {0.25, -1.5}), {1, 1, 3, 3});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 5 * 4; ++i) {
        CHECK(y[(n * 2 + 0) * 20 + i] == 0.25);
        CHECK(y[(n * 2 + 1) * 20 + i] == -1.5);
      }
  }
}

TEST_CASE("conv2d errors") {
  const Tensor x({1, 2, 5, 5});
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 3, 3, 3}), Tensor({1}), {1, 0, 3, 3}), DimensionError);
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 2, 2}), Tensor({1}), {2, 0, 2, 2}), GeometryError);
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 3, 3}), Tensor({2}), {1, 0, 3, 3}), DimensionError);
  try {
    conv2d(x, Tensor({1, 3, 3, 3}), Tensor({1}), {1, 0, 3, 3});
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("channel axis") != std::string::npos);
  }
}

TEST_CASE("conv2d matches the nested-loop oracle bit for bit") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng.between(1, 2), c = rng.between(1, 3), f = rng.between(1, 3);
    const std::size_t k = rng.between(1, 3), s = rng.between(1, 2), p = rng.between(0, 1);
    std::size_t h = rng.between(k, 8), w = rng.between(k, 8);
    // adjust so the stride tiles the padded extent
    while ((h + 2 * p - k) % s)
      ++h;
    while ((w + 2 * p - k) % s)
      ++w;
    const Tensor x = oracle::random_tensor({n, c, h, w}, rng);
    const Tensor kern = oracle::random_tensor({f, c, k, k}, rng);
    const Tensor b = oracle::random_tensor({f}, rng);
    CHECK(conv2d(x, kern, b, {s, p, k, k}) == oracle::conv2d(x, kern, b, s, p));
  }
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(4);
  const Tensor x = oracle::random_tensor({2, 2, 6, 6}, rng);
  const Tensor z = oracle::random_tensor({2, 2, 6, 6}, rng);
  const Tensor k = oracle::random_tensor({3, 2, 3, 3}, rng);
  const Tensor b({3});
  const double alpha = 0.7, beta = -1.3;
  Tensor mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix[i] = alpha * x[i] + beta * z[i];
  const ConvGeom g{1, 1, 3, 3};
  const Tensor lhs = conv2d(mix, k, b, g);
  const Tensor cx = conv2d(x, k, b, g), cz = conv2d(z, k, b, g);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(std::abs(lhs[i] - (alpha * cx[i] + beta * cz[i])) < 1e-9);
}

TEST_CASE("maxpool2d") {
  SUBCASE("worked example") {
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const PoolResult r = maxpool2d(x, 2, 1);
    CHECK(r.output == oracle::maxpool2d(x, 2, 1));
    CHECK(r.output == Tensor({1, 1, 2, 2}, {5, 6, 8, 9}));
    CHECK(r.argmax == ArgmaxIndexMap{4, 5, 7, 8});
  }
  SUBCASE("constant field") {
    const PoolResult r = maxpool2d(Tensor({1, 2, 4, 4}, 0.3), 2, 2);
    for (double v : r.output.data())
      CHECK(v == 0.3);
  }
  SUBCASE("full-extent window is the global max") {
    Rng rng(5);
    const Tensor x = oracle::random_tensor({1, 1, 5, 5}, rng);
    const PoolResult r = maxpool2d(x, 5, 1);
    CHECK(r.output.size() == 1);
    CHECK(r.output[0] == *std::max_element(x.data().begin(), x.data().end()));
  }
  SUBCASE("geometry errors") {
    CHECK_THROWS_AS(maxpool2d(Tensor({1, 1, 5, 5}), 2, 2), GeometryError);
    CHECK_THROWS_AS(maxpool2d(Tensor({1, 1, 3, 3}), 4, 1), GeometryError);
  }
  SUBCASE("outputs bound their windows") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t win = rng.between(1, 3), s = rng.between(1, 2);
      std::size_t h = rng.between(win, 8);
      while ((h - win) % s)
        ++h;
      const Tensor x = oracle::random_tensor({1, 2, h, h}, rng);
      const PoolResult r = maxpool2d(x, win, s);
      CHECK(r.output == oracle::maxpool2d(x, win, s));
      const double global = *std::max_element(x.data().begin(), x.data().end());
      for (std::size_t i = 0; i < r.output.size(); ++i) {
        CHECK(r.output[i] <= global);
        CHECK(x[r.argmax[i]] == r.output[i]);
      }
    }
  }
}

TEST_CASE("matmul") {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  CHECK(matmul(a, Tensor::from_rows({{5}, {6}})) == Tensor::from_rows({{17}, {39}}));
  CHECK(matmul(a, Tensor::from_rows({{1, 0}, {0, 1}})) == a);
  CHECK(matmul(Tensor({3, 2}), a) == Tensor({3, 2}));
  CHECK_THROWS_AS(matmul(a, Tensor({3, 1})), DimensionError);

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = oracle::random_tensor({4, 4}, rng), y = oracle::random_tensor({4, 4}, rng),
                 z = oracle::random_tensor({4, 4}, rng);
    CHECK(matmul(x, y) == oracle::matmul(x, y));
    const Tensor l = matmul(x, matmul(y, z)), r = matmul(matmul(x, y), z);
    for (std::size_t i = 0; i < l.size(); ++i)
      CHECK(std::abs(l[i] - r[i]) <= 1e-9 * std::max(1.0, std::abs(r[i])));
  }
}

TEST_CASE("elementwise") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(relu(Tensor({3}, {-1, 0, 2})) == Tensor({3}, {0, 0, 2}));
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-40, 40);
    CHECK(sigmoid(x) + sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
  CHECK(scale(Tensor({2}, {1, -2}), 3.0) == Tensor({2}, {3, -6}));
  const Tensor biased = add_bias(Tensor({2, 3}), Tensor({3}, {1, 2, 3}));
  CHECK(biased == Tensor({2, 3}, {1, 2, 3, 1, 2, 3}));
}
