#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "itsgw/nn/layers.hpp"
#include "oracles.hpp"

using namespace itsgw;
using namespace itsgw::nn;

namespace {

Tensor2D random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  return Tensor2D::normal(r, c, scale, rng);
}

}  // namespace

TEST(Matmul, IdentityAndSmallExpansion) {
  std::mt19937_64 rng(1);
  const Tensor2D a = random_tensor(2, 2, rng);
  EXPECT_EQ(matmul(Tensor2D::identity(2), a), a);
  const Tensor2D x = Tensor2D::from_rows({{1, 2}, {3, 4}});
  const Tensor2D y = Tensor2D::from_rows({{5}, {6}});
  EXPECT_EQ(matmul(x, y), Tensor2D::from_rows({{17}, {39}}));
  EXPECT_THROW(matmul(x, Tensor2D(3, 1)), error);
}

TEST(Matmul, MatchesNaiveTripleLoop) {
  std::mt19937_64 rng(2);
  const Tensor2D a = random_tensor(7, 5, rng), b = random_tensor(5, 3, rng);
  const Tensor2D got = matmul(a, b), want = oracle::naive_matmul(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  const Tensor2D tn = matmul_tn(transpose(a), b), nt = matmul_nt(a, transpose(b));
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(tn[i], want[i], 1e-12);
    EXPECT_NEAR(nt[i], want[i], 1e-12);
  }
}

TEST(Matmul, Associativity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor2D a = random_tensor(8, 8, rng), b = random_tensor(8, 8, rng), c = random_tensor(8, 8, rng);
    const Tensor2D l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) ASSERT_NEAR(l[i], r[i], 1e-9);
  }
}

TEST(Softmax, Fixtures) {
  auto s = softmax_rows(Tensor2D::from_rows({{0, 0}, {std::log(2.0), 0}, {1000, 0}}));
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_NEAR(s(1, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(2, 0), 1.0, 1e-12);
  EXPECT_NEAR(s(2, 1), 0.0, 1e-12);
  EXPECT_TRUE(s.all_finite());
}

TEST(Softmax, RowsSumToOneAndArePositive) {
  std::mt19937_64 rng(4);
  const Tensor2D s = softmax_rows(random_tensor(50, 9, rng, 5.0));
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double sum = 0.0;
    for (double v : s.row(r)) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(LayerNormOp, Fixtures) {
  const Tensor2D ones(1, 4, 1.0), zeros(1, 4, 0.0);
  const Tensor2D constant = layer_norm(Tensor2D(1, 4, 3.7), ones, zeros);
  for (double v : constant.data()) EXPECT_LT(std::fabs(v), 1e-6);

  const Tensor2D pm = layer_norm(Tensor2D::from_rows({{1, -1}}), Tensor2D(1, 2, 1.0), Tensor2D(1, 2, 0.0), 1e-300);
  EXPECT_NEAR(pm[0], 1.0, 1e-15);
  EXPECT_NEAR(pm[1], -1.0, 1e-15);

  std::mt19937_64 rng(5);
  const Tensor2D beta = random_tensor(1, 6, rng);
  const Tensor2D out = layer_norm(random_tensor(3, 6, rng), Tensor2D(1, 6, 0.0), beta);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(out(r, c), beta[c]);

  EXPECT_THROW(layer_norm(Tensor2D(2, 3), Tensor2D(1, 2), Tensor2D(1, 3)), error);
}

TEST(CrossEntropy, Fixtures) {
  const std::size_t zero = 0;
  auto uniform = cross_entropy(Tensor2D::from_rows({{0, 0}}), std::span(&zero, 1));
  EXPECT_NEAR(uniform.loss, std::log(2.0), 1e-15);
  auto saturated = cross_entropy(Tensor2D::from_rows({{10, -10}}), std::span(&zero, 1));
  EXPECT_NEAR(saturated.loss, std::log1p(std::exp(-20.0)), 1e-20);
  EXPECT_NEAR(saturated.loss, 2.061e-9, 1e-12);
  const std::size_t bad = 2;
  try {
    cross_entropy(Tensor2D::from_rows({{0, 0}}), std::span(&bad, 1));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::label_out_of_range);
  }
}

TEST(CrossEntropy, BatchMeanMatchesPerRowOracleAndGradientRowsSumToZero) {
  std::mt19937_64 rng(6);
  const Tensor2D logits = random_tensor(12, 5, rng, 3.0);
  std::vector<std::size_t> labels(12);
  for (auto& l : labels) l = rng() % 5;
  auto res = cross_entropy(logits, labels);
  double mean = 0.0;
  for (std::size_t r = 0; r < 12; ++r) mean += oracle::row_cross_entropy(logits.row(r), labels[r]) / 12.0;
  EXPECT_NEAR(res.loss, mean, 1e-12);
  for (std::size_t r = 0; r < 12; ++r) {
    double s = 0.0;
    for (double g : res.grad.row(r)) s += g;
    EXPECT_NEAR(s, 0.0, 1e-12);
  }
}

TEST(Attention, SingleKeyReturnsValueRow) {
  std::mt19937_64 rng(7);
  const Tensor2D q = random_tensor(3, 4, rng), k = random_tensor(1, 4, rng), v = random_tensor(1, 5, rng);
  const std::uint8_t mask[] = {1};
  const Tensor2D out = scaled_dot_attention(q, k, v, mask);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(out(r, c), v(0, c), 1e-15);
}

TEST(Attention, IdenticalKeysAverageUnmaskedValues) {
  std::mt19937_64 rng(8);
  const Tensor2D q = random_tensor(2, 4, rng), v = random_tensor(4, 3, rng);
  const Tensor2D key_row = random_tensor(1, 4, rng);
  Tensor2D k(4, 4);
  for (std::size_t r = 0; r < 4; ++r) std::copy(key_row.row(0).begin(), key_row.row(0).end(), k.row(r).begin());
  const std::uint8_t mask[] = {1, 0, 1, 1};
  const Tensor2D out = scaled_dot_attention(q, k, v, mask);
  for (std::size_t c = 0; c < 3; ++c) {
    const double mean = (v(0, c) + v(2, c) + v(3, c)) / 3.0;
    EXPECT_NEAR(out(0, c), mean, 1e-12);
    EXPECT_NEAR(out(1, c), mean, 1e-12);
  }
}

TEST(Attention, MatchesNaiveLoopOracle) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor2D q = random_tensor(5, 6, rng), k = random_tensor(7, 6, rng), v = random_tensor(7, 4, rng);
    std::vector<std::uint8_t> mask(7);
    for (auto& m : mask) m = rng() % 3 != 0;
    mask[0] = 1;
    const Tensor2D got = scaled_dot_attention(q, k, v, mask);
    const Tensor2D want = oracle::naive_attention(q, k, v, mask);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-10);
  }
}

TEST(Attention, InvariantToMaskedKeysAndValues) {
  std::mt19937_64 rng(10);
  const Tensor2D q = random_tensor(4, 6, rng);
  Tensor2D k = random_tensor(6, 6, rng), v = random_tensor(6, 3, rng);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 0};
  const Tensor2D before = scaled_dot_attention(q, k, v, mask);
  for (std::size_t r : {2, 4, 5}) {
    for (auto& x : k.row(r)) x = 1e6;
    for (auto& x : v.row(r)) x = -1e6;
  }
  EXPECT_EQ(scaled_dot_attention(q, k, v, mask), before);
}

TEST(Attention, ShapeErrors) {
  const std::uint8_t mask[] = {1, 1};
  EXPECT_THROW(scaled_dot_attention(Tensor2D(1, 3), Tensor2D(2, 4), Tensor2D(2, 2), mask), error);
  EXPECT_THROW(scaled_dot_attention(Tensor2D(1, 3), Tensor2D(2, 3), Tensor2D(3, 2), mask), error);
  const std::uint8_t short_mask[] = {1};
  EXPECT_THROW(scaled_dot_attention(Tensor2D(1, 3), Tensor2D(2, 3), Tensor2D(2, 2), short_mask), error);
}

TEST(GeluOp, DerivativeMatchesCentralDifference) {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    const double fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(gelu_derivative(x), fd, 1e-8);
  }
  EXPECT_DOUBLE_EQ(gelu(0.0), 0.0);
}

// Gradient checks: every shipped layer, 10 seeds each, h = 1e-5.

namespace {

WeightedSumLoss random_loss(std::size_t r, std::size_t c, std::mt19937_64& rng) { return {Tensor2D::normal(r, c, 1.0, rng)}; }

}  // namespace

TEST(GradCheck, Linear) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Linear layer(6, 5, true, 0.5, rng);
    const Tensor2D x = random_tensor(4, 6, rng);
    auto res = grad_check(layer, x, random_loss(4, 5, rng), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " worst " << res.worst_param;
    EXPECT_EQ(res.checked, 6u * 5 + 5 + 4 * 6);
  }
}

TEST(GradCheck, LayerNorm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    LayerNorm layer(7);
    layer.gamma() = random_tensor(1, 7, rng);
    layer.beta() = random_tensor(1, 7, rng);
    auto res = grad_check(layer, random_tensor(3, 7, rng, 2.0), random_loss(3, 7, rng), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " worst " << res.worst_param;
  }
}

TEST(GradCheck, Gelu) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Gelu layer;
    auto res = grad_check(layer, random_tensor(3, 5, rng, 2.0), random_loss(3, 5, rng), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, FeedForward) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    FeedForward layer(6, 12, 0.4, rng);
    auto res = grad_check(layer, random_tensor(4, 6, rng), random_loss(4, 6, rng), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " worst " << res.worst_param;
  }
}

TEST(GradCheck, MultiHeadSelfAttentionWithMask) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    MultiHeadSelfAttention layer(8, 2, 0.4, rng);
    layer.set_mask({1, 1, 1, 0, 1});
    auto res = grad_check(layer, random_tensor(5, 8, rng), random_loss(5, 8, rng), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " worst " << res.worst_param;
  }
}

TEST(GradCheck, CrossEntropyOnLinear) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Linear layer(6, 4, true, 0.5, rng);
    CrossEntropyLoss loss{{0, 3, 1, 2, 2}};
    auto res = grad_check(layer, random_tensor(5, 6, rng), loss, 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " worst " << res.worst_param;
  }
}

TEST(GradCheck, RejectsStepOutsideRange) {
  std::mt19937_64 rng(0);
  Linear layer(2, 2, true, 0.1, rng);
  EXPECT_THROW(grad_check(layer, Tensor2D(1, 2), WeightedSumLoss{Tensor2D(1, 2)}, 1e-2), error);
}

TEST(Layers, BackwardWithoutForwardFails) {
  LayerNorm ln(3);
  EXPECT_THROW(ln.backward(Tensor2D(2, 3)), error);
}
