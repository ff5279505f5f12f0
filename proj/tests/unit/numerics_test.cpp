#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gradcheck.hpp"
#include "t2t/ops.hpp"

namespace t2t {
namespace {

using T = Tensor<double>;
using testing::max_grad_error;

T random_tensor(Shape shape, Rng& rng) {
  const Index n = shape_numel(shape);
  VectorX<double> v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return T::from_values(std::move(shape), std::move(v));
}

TEST(Matmul, IdentityAndHandArithmetic) {
  auto eye = T::from_vector({2, 2}, {1, 0, 0, 1});
  auto b = T::from_vector({2, 2}, {3, 4, 5, 6});
  auto c = matmul(eye, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<double>(c.values().begin(), c.values().end()), (std::vector<double>{3, 4, 5, 6}));
  auto d = matmul(T::from_vector({1, 2}, {1, 2}), T::from_vector({2, 1}, {3, 4}));
  EXPECT_DOUBLE_EQ(d.item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(T::zeros({2, 3}), T::zeros({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
  }
}

TEST(Matmul, SumGradientIsOnesTimesBTransposed) {
  Rng rng(1);
  auto a = random_tensor({4, 5}, rng);
  auto b = random_tensor({5, 3}, rng);
  a.set_requires_grad(true);
  backward(sum(matmul(a, b)));
  RowMatrix<double> expected = RowMatrix<double>::Ones(4, 3) * b.matrix().transpose();
  for (Index i = 0; i < 20; ++i) EXPECT_NEAR(a.grad()[i], expected.data()[i], 1e-12);
  EXPECT_LT(max_grad_error({a, b}, [](const auto& in) { return sum(matmul(in[0], in[1])); }), 1e-4);
}

TEST(Matmul, BatchedAndTransposedGradients) {
  Rng rng(2);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 4, 3}, rng);
  auto w = random_tensor({4, 2}, rng);
  auto probe = random_tensor({2, 3, 3}, rng);
  EXPECT_LT(max_grad_error({a, b}, [&](const auto& in) { return sum(mul(matmul(in[0], in[1]), probe)); }), 1e-4);
  auto probe2 = random_tensor({2, 3, 2}, rng);
  EXPECT_LT(max_grad_error({a, w}, [&](const auto& in) { return sum(mul(matmul(in[0], in[1]), probe2)); }), 1e-4);
  auto c = random_tensor({2, 5, 4}, rng);
  auto probe3 = random_tensor({2, 3, 5}, rng);
  EXPECT_LT(max_grad_error({a, c}, [&](const auto& in) { return sum(mul(matmul_nt(in[0], in[1]), probe3)); }),
            1e-4);
}

TEST(Softmax, SymmetryAndStability) {
  auto s = softmax(T::from_vector({3}, {0, 0, 0}));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(s[i], 1.0 / 3.0, 1e-15);
  auto big = softmax(T::from_vector({2}, {1000, 1000}));
  EXPECT_DOUBLE_EQ(big[0], 0.5);
  EXPECT_DOUBLE_EQ(big[1], 0.5);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  auto s = softmax(T::from_vector({3}, {1, 2, 3}));
  long double z = 0;
  for (int i = 1; i <= 3; ++i) z += std::exp(static_cast<long double>(i));
  for (int i = 0; i < 3; ++i) {
    const long double expected = std::exp(static_cast<long double>(i + 1)) / z;
    EXPECT_NEAR(s[i], static_cast<double>(expected), 1e-15);
  }
}

TEST(Softmax, FullyMaskedRowIsUniform) {
  const double inf = std::numeric_limits<double>::infinity();
  auto x = T::from_vector({2, 3}, {-inf, -inf, -inf, 1, -inf, 2}, true);
  auto s = softmax(x);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(s[i], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(s[4], 0.0);
  backward(sum(mul(s, T::from_vector({2, 3}, {1, 2, 3, 4, 5, 6}))));
  for (Index i = 0; i < 6; ++i) EXPECT_TRUE(std::isfinite(x.grad()[i]));
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 0.0);
}

TEST(Softmax, RowsSumToOneAndGradientOnAnyAxis) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({3, 4, 5}, rng);
    for (Index axis = 0; axis < 3; ++axis) {
      auto s = softmax(x, axis);
      for (Index i = 0; i < s.numel(); ++i) {
        EXPECT_GE(s[i], 0.0);
        EXPECT_LE(s[i], 1.0);
      }
      const Index stride = axis == 0 ? 20 : axis == 1 ? 5 : 1;
      const Index n = x.size(axis);
      for (Index base = 0; base < s.numel(); ++base) {
        if ((base / stride) % n != 0) continue;
        double total = 0;
        for (Index k = 0; k < n; ++k) total += s[base + k * stride];
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
  auto x = random_tensor({3, 4}, rng);
  auto probe = random_tensor({3, 4}, rng);
  EXPECT_LT(max_grad_error({x}, [&](const auto& in) { return sum(mul(softmax(in[0], 0), probe)); }), 1e-4);
  EXPECT_LT(max_grad_error({x}, [&](const auto& in) { return sum(mul(softmax(in[0], 1), probe)); }), 1e-4);
}

TEST(RmsLayerNorm, OnesAndHalving) {
  auto ones = T::full({8}, 1.0);
  auto gain = T::full({8}, 1.0);
  auto y = rms_layer_norm(ones, gain);
  for (Index i = 0; i < 8; ++i) EXPECT_NEAR(y[i], 1.0, 1e-6);
  auto half = rms_layer_norm(ones, T::full({8}, 0.5));
  for (Index i = 0; i < 8; ++i) EXPECT_NEAR(half[i], 0.5 * y[i], 1e-15);
}

TEST(RmsLayerNorm, NoMeanSubtraction) {
  auto x = T::from_vector({4}, {1, 2, 3, 4});
  auto y = rms_layer_norm(x, T::full({4}, 1.0), 0.0);
  const double rms = std::sqrt((1 + 4 + 9 + 16) / 4.0);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(y[i], (i + 1) / rms, 1e-14);
}

TEST(RmsLayerNorm, ScaleInvarianceAndGradient) {
  Rng rng(4);
  auto x = random_tensor({3, 6}, rng);
  auto gain = random_tensor({6}, rng);
  auto base = rms_layer_norm(x, gain, 0.0);
  for (double c : {0.5, 3.0, 100.0}) {
    VectorX<double> scaled = c * x.values();
    auto y = rms_layer_norm(T::from_values(x.shape(), scaled), gain, 0.0);
    for (Index i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], base[i], 1e-10);
  }
  auto probe = random_tensor({3, 6}, rng);
  EXPECT_LT(max_grad_error({x, gain},
                           [&](const auto& in) { return sum(mul(rms_layer_norm(in[0], in[1]), probe)); }),
            1e-4);
}

TEST(RmsLayerNorm, GainLengthMismatch) {
  EXPECT_THROW(rms_layer_norm(T::zeros({2, 3}), T::zeros({4})), DimensionError);
}

TEST(Dropout, EvalIsIdentityAndRateValidated) {
  Rng rng(5);
  auto x = random_tensor({10}, rng);
  auto y = dropout(x, 0.5, rng, false);
  EXPECT_EQ(y.storage_id(), x.storage_id());
  auto z = dropout(x, 0.0, rng, true);
  for (Index i = 0; i < 10; ++i) EXPECT_EQ(z[i], x[i]);
  EXPECT_THROW(dropout(x, 1.0, rng, true), ParameterError);
  EXPECT_THROW(dropout(x, -0.1, rng, true), ParameterError);
}

TEST(Dropout, ZeroFractionAndMeanPreserved) {
  Rng rng(6);
  const Index n = 1'000'000;
  auto y = dropout(T::full({n}, 1.0), 0.1, rng, true);
  Index zeros = 0;
  for (Index i = 0; i < n; ++i) zeros += y[i] == 0.0;
  const double frac = static_cast<double>(zeros) / static_cast<double>(n);
  const double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(n));
  EXPECT_NEAR(frac, 0.1, 3 * sigma);
  EXPECT_NEAR(y.values().mean(), 1.0, 3 * sigma / 0.9);
}

TEST(Dropout, GradientFollowsMask) {
  Rng rng(7);
  auto x = random_tensor({50}, rng);
  x.set_requires_grad(true);
  auto y = dropout(x, 0.3, rng, true);
  backward(sum(y));
  for (Index i = 0; i < 50; ++i) EXPECT_NEAR(x.grad()[i], y[i] == 0.0 ? 0.0 : 1.0 / 0.7, 1e-12);
}

TEST(CrossEntropy, HandValuesAndIgnore) {
  auto logits = T::from_vector({2, 4}, {0, 0, 0, 0, 0, 0, 0, 0});
  const std::vector<TokenId> t{3, 0};
  EXPECT_NEAR(cross_entropy(logits, std::span<const TokenId>(t), -1).item(), std::log(4.0), 1e-12);
  const std::vector<TokenId> ignored{0, 0};
  EXPECT_EQ(cross_entropy(logits, std::span<const TokenId>(ignored), 0).item(), 0.0);
  auto peaked = T::from_vector({1, 3}, {100, 0, 0});
  const std::vector<TokenId> right{0};
  EXPECT_NEAR(cross_entropy(peaked, std::span<const TokenId>(right), -1).item(), 0.0, 1e-30);
}

TEST(CrossEntropy, ErrorsAndGradient) {
  Rng rng(8);
  auto logits = random_tensor({5, 7}, rng);
  const std::vector<TokenId> bad{0, 1, 2, 3, 7};
  EXPECT_THROW(cross_entropy(logits, std::span<const TokenId>(bad), -1), IndexError);
  const std::vector<TokenId> t{0, 6, -1, 3, 2};
  EXPECT_LT(max_grad_error({logits},
                           [&](const auto& in) { return cross_entropy(in[0], std::span<const TokenId>(t), -1); }),
            1e-4);
}

TEST(Backward, SumAndSquareGradients) {
  Rng rng(9);
  auto x = random_tensor({6}, rng);
  x.set_requires_grad(true);
  backward(sum(x));
  for (Index i = 0; i < 6; ++i) EXPECT_EQ(x.grad()[i], 1.0);
  x.clear_grad();
  backward(sum(mul(x, x)));
  for (Index i = 0; i < 6; ++i) EXPECT_NEAR(x.grad()[i], 2 * x[i], 1e-15);
}

TEST(Backward, AccumulatesUntilCleared) {
  auto x = T::from_vector({3}, {1, 2, 3}, true);
  backward(sum(x));
  backward(sum(x));
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 2.0);
  x.zero_grad();
  backward(sum(x));
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 1.0);
}

TEST(Backward, NonScalarLossRejected) {
  auto x = T::from_vector({3}, {1, 2, 3}, true);
  EXPECT_THROW(backward(x), ShapeError);
}

TEST(Backward, SharedNodeReceivesBothPaths) {
  auto w = T::from_vector({2}, {3, 4}, true);
  backward(add(sum(mul(w, w)), sum(w)));
  EXPECT_NEAR(w.grad()[0], 7.0, 1e-15);
  EXPECT_NEAR(w.grad()[1], 9.0, 1e-15);
}

TEST(Ops, ElementwiseAndShapeGradients) {
  Rng rng(10);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4}, rng);
  auto probe = random_tensor({3, 4}, rng);
  EXPECT_LT(max_grad_error({a, b}, [&](const auto& in) { return sum(mul(add(in[0], in[1]), probe)); }), 1e-4);
  auto a2 = random_tensor({3, 4}, rng);
  EXPECT_LT(max_grad_error({a, a2}, [&](const auto& in) { return sum(mul(sub(in[0], in[1]), probe)); }), 1e-4);
  EXPECT_LT(max_grad_error({a}, [&](const auto& in) { return mean(mul(relu(in[0]), probe)); }), 1e-4);
  EXPECT_LT(max_grad_error({a}, [&](const auto& in) {
              return sum(mul(reshape(scale(in[0], 2.5), {4, 3}), reshape(probe, {4, 3})));
            }),
            1e-4);
  auto heads = random_tensor({5, 6}, rng);
  auto probe2 = random_tensor({3, 5, 2}, rng);
  EXPECT_LT(max_grad_error({heads}, [&](const auto& in) { return sum(mul(split_heads(in[0], 3), probe2)); }), 1e-4);
  auto merged = random_tensor({3, 5, 2}, rng);
  auto probe3 = random_tensor({5, 6}, rng);
  EXPECT_LT(max_grad_error({merged}, [&](const auto& in) { return sum(mul(merge_heads(in[0]), probe3)); }), 1e-4);
}

TEST(Ops, EmbeddingGatherBiasConcat) {
  Rng rng(11);
  auto table = random_tensor({6, 3}, rng);
  const std::vector<TokenId> ids{1, 5, 1, 0};
  auto probe = random_tensor({4, 3}, rng);
  EXPECT_LT(max_grad_error({table},
                           [&](const auto& in) {
                             return sum(mul(embedding(in[0], std::span<const TokenId>(ids)), probe));
                           }),
            1e-4);
  const std::vector<TokenId> bad{6};
  EXPECT_THROW(embedding(table, std::span<const TokenId>(bad)), IndexError);

  auto bias = random_tensor({2, 4}, rng);
  const std::vector<int> buckets{0, 1, 2, 3, 3, 0};
  auto probe2 = random_tensor({2, 2, 3}, rng);
  EXPECT_LT(max_grad_error({bias},
                           [&](const auto& in) {
                             return sum(mul(gather_bias(in[0], std::span<const int>(buckets), 2, 3), probe2));
                           }),
            1e-4);

  auto p = random_tensor({2, 3}, rng);
  auto q = random_tensor({1, 3}, rng);
  auto probe3 = random_tensor({3, 3}, rng);
  EXPECT_LT(max_grad_error({p, q}, [&](const auto& in) { return sum(mul(concat_rows<double>({in[0], in[1]}), probe3)); }),
            1e-4);
}

TEST(Determinism, SameSeedSameDraws) {
  Rng a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Determinism, DrawRangesAndRepeatability) {
  Rng rng(0, 0);
  const std::uint32_t first = rng.next_u32();
  Rng again(0, 0);
  EXPECT_EQ(first, again.next_u32());
  Rng r(123);
  for (int i = 0; i < 1000; ++i) {
    const auto k = r.uniform_int(7);
    EXPECT_LT(k, 7u);
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Precision, FloatTensorsWork) {
  auto a = Tensor<float>::from_vector({1, 2}, {1, 2}, true);
  auto b = Tensor<float>::from_vector({2, 1}, {3, 4});
  auto c = matmul(a, b);
  EXPECT_FLOAT_EQ(c.item(), 11.0f);
  backward(sum(c));
  EXPECT_FLOAT_EQ(a.grad()[0], 3.0f);
}

}  // namespace
}  // namespace t2t
