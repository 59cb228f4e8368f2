#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "bru/errors.hpp"
#include "bru/gradcheck.hpp"
#include "bru/layers.hpp"

using namespace bru;

namespace {

// Direct-loop cross-correlation; padding placed as (total / 2) before the data.
Tensor64 naive_conv(const Tensor64& x, const Tensor64& k, std::size_t s, Padding pad) {
  const std::size_t B = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3];
  const std::size_t KH = k.shape()[0], KW = k.shape()[1], O = k.shape()[3];
  std::size_t OH, OW, ph = 0, pw = 0;
  if (pad == Padding::Same) {
    OH = (H + s - 1) / s;
    OW = (W + s - 1) / s;
    const long th = std::max<long>(0, long((OH - 1) * s + KH) - long(H));
    const long tw = std::max<long>(0, long((OW - 1) * s + KW) - long(W));
    ph = th / 2;
    pw = tw / 2;
  } else {
    OH = (H - KH) / s + 1;
    OW = (W - KW) / s + 1;
  }
  Tensor64 y(Shape{B, OH, OW, O});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j)
        for (std::size_t o = 0; o < O; ++o) {
          double acc = 0;
          for (std::size_t u = 0; u < KH; ++u)
            for (std::size_t v = 0; v < KW; ++v) {
              const long r = long(i * s + u) - long(ph), c = long(j * s + v) - long(pw);
              if (r < 0 || c < 0 || r >= long(H) || c >= long(W)) continue;
              for (std::size_t ci = 0; ci < C; ++ci)
                acc += x[((b * H + r) * W + c) * C + ci] * k[((u * KW + v) * C + ci) * O + o];
            }
          y[((b * OH + i) * OW + j) * O + o] = acc;
        }
  return y;
}

Tensor64 randn(const Shape& s, std::uint64_t seed, double sd = 1.0) {
  CounterRng rng(seed, "test");
  return normal_tensor<double>(s, rng, sd);
}

double dot(const Tensor64& a, const Tensor64& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(PlanAxis, ShapeRules) {
  EXPECT_EQ(plan_axis(28, 5, 1, Padding::Same).out, 28u);
  EXPECT_EQ(plan_axis(28, 5, 1, Padding::Same).pad_lo, 2u);
  EXPECT_EQ(plan_axis(32, 3, 2, Padding::Valid).out, 15u);
  EXPECT_EQ(plan_axis(32, 2, 1, Padding::Valid).out, 31u);
  EXPECT_EQ(plan_axis(7, 6, 1, Padding::Same).out, 7u);
  EXPECT_EQ(plan_axis(7, 6, 1, Padding::Same).pad_lo, 2u);  // 5 padded cells, 3 after
  EXPECT_EQ(plan_axis(5, 2, 2, Padding::Same).out, 3u);
  EXPECT_EQ(plan_axis(5, 2, 2, Padding::Same).pad_lo, 0u);
  EXPECT_THROW(plan_axis(3, 5, 1, Padding::Valid), ShapeError);
}

TEST(PlanAxis, SameStrideOnePreservesExtent) {
  for (std::size_t k : {1, 2, 3, 5, 6})
    for (std::size_t n : {1, 4, 7, 28}) EXPECT_EQ(plan_axis(n, k, 1, Padding::Same).out, n);
}

TEST(Dense, Examples) {
  const Tensor64 x(Shape{1, 2}, {1, 2});
  const Tensor64 eye(Shape{2, 2}, {1, 0, 0, 1});
  const Tensor64 b(Shape{2}, {1, 1});
  EXPECT_EQ(test::vec(dense_forward(x, eye, b)), (std::vector<double>{2, 3}));
  EXPECT_EQ(test::vec(dense_forward(x, eye, Tensor64(Shape{2}))), test::vec(x));
  EXPECT_EQ(test::vec(dense_forward(Tensor64(Shape{3, 2}), eye, b)), (std::vector<double>(6, 1.0)));
  EXPECT_THROW(matmul(x, Tensor64(Shape{3, 2})), ShapeError);
}

TEST(Dense, BackwardIsAdjoint) {
  const auto x = randn(Shape{4, 6}, 1), w = randn(Shape{6, 5}, 2), dy = randn(Shape{4, 5}, 3);
  const auto g = matmul_backward(x, w, dy);
  // <dy, d(xW)> = <dx, delta x> + <dw, delta w> for random perturbations.
  const auto ex = randn(Shape{4, 6}, 4), ew = randn(Shape{6, 5}, 5);
  const double lhs = dot(dy, matmul(ex, w)) + dot(dy, matmul(x, ew));
  EXPECT_NEAR(lhs, dot(g.dx, ex) + dot(g.dw, ew), 1e-10);
  const auto db = add_bias_backward(dy);
  for (std::size_t c = 0; c < 5; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 4; ++r) s += dy[r * 5 + c];
    EXPECT_NEAR(db[c], s, 1e-12);
  }
}

TEST(Conv2D, MatchesDirectLoops) {
  struct Case { std::size_t h, w, c, k, o, s; Padding p; };
  for (const Case& t : {Case{5, 5, 3, 3, 4, 1, Padding::Same}, Case{6, 7, 2, 2, 3, 2, Padding::Same},
                        Case{7, 6, 2, 6, 2, 1, Padding::Same}, Case{32, 32, 3, 2, 5, 1, Padding::Valid},
                        Case{9, 9, 4, 3, 3, 2, Padding::Valid}, Case{4, 4, 8, 1, 6, 1, Padding::Same},
                        Case{28, 28, 1, 5, 6, 1, Padding::Same}}) {
    const auto x = randn(Shape{2, t.h, t.w, t.c}, 10), k = randn(Shape{t.k, t.k, t.c, t.o}, 11);
    const auto y = conv2d(x, k, t.s, t.p), want = naive_conv(x, k, t.s, t.p);
    ASSERT_EQ(y.shape(), want.shape());
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], want[i], 1e-10);
  }
}

TEST(Conv2D, Examples) {
  const auto x = randn(Shape{1, 28, 28, 1}, 12);
  const Tensor64 one(Shape{1, 1, 1, 1}, 1.0);
  EXPECT_EQ(conv2d_forward(x, one, Tensor64(Shape{1}), 1, Padding::Same), x);
  EXPECT_EQ(conv2d(x, Tensor64(Shape{5, 5, 1, 6}), 1, Padding::Same).shape(), (Shape{1, 28, 28, 6}));
  EXPECT_THROW(conv2d(x, Tensor64(Shape{29, 29, 1, 1}), 1, Padding::Valid), ShapeError);
  EXPECT_THROW(conv2d(x, Tensor64(Shape{3, 3, 2, 1}), 1, Padding::Same), ShapeError);
}

TEST(Conv2D, BackwardIsAdjoint) {
  for (Padding p : {Padding::Same, Padding::Valid})
    for (std::size_t s : {1u, 2u}) {
      const auto x = randn(Shape{2, 7, 6, 3}, 20), k = randn(Shape{3, 3, 3, 4}, 21);
      const auto y = conv2d(x, k, s, p);
      const auto dy = randn(y.shape(), 22);
      const auto g = conv2d_backward(x, k, dy, s, p);
      const auto ex = randn(x.shape(), 23), ek = randn(k.shape(), 24);
      const double lhs = dot(dy, conv2d(ex, k, s, p)) + dot(dy, conv2d(x, ek, s, p));
      EXPECT_NEAR(lhs, dot(g.dx, ex) + dot(g.dkernels, ek), 1e-9);
    }
}

TEST(Pool, Examples) {
  const Tensor64 x(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  EXPECT_EQ(test::vec(pool_forward(x, Window2D{2, 2, 2, Padding::Same}, PoolMode::Avg).y),
            (std::vector<double>{2.5}));
  EXPECT_EQ(test::vec(pool_forward(x, Window2D{2, 2, 2, Padding::Same}, PoolMode::Max).y),
            (std::vector<double>{4}));
  const Tensor64 c(Shape{2, 7, 7, 3}, 1.75);
  for (PoolMode m : {PoolMode::Avg, PoolMode::Max}) {
    const auto y = pool_forward(c, Window2D{6, 6, 1, Padding::Same}, m).y;
    EXPECT_EQ(y.shape(), (Shape{2, 7, 7, 3}));
    for (double v : y) EXPECT_DOUBLE_EQ(v, 1.75);
  }
}

TEST(Pool, AverageCountsOnlyInBoundsCells) {
  // 3x3 input, 2x2 windows with stride 2 under Same: the last row/column
  // windows see a single data row/column.
  const Tensor64 x(Shape{1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = pool_forward(x, Window2D{2, 2, 2, Padding::Same}, PoolMode::Avg).y;
  EXPECT_EQ(test::vec(y), (std::vector<double>{3, 4.5, 7.5, 9}));
}

TEST(Pool, MaxGradientGoesToFirstMaximum) {
  const Tensor64 x(Shape{1, 2, 2, 1}, {5, 5, 1, 5});
  const Window2D w{2, 2, 2, Padding::Valid};
  const auto fwd = pool_forward(x, w, PoolMode::Max);
  EXPECT_EQ(fwd.argmax, (std::vector<std::size_t>{0}));
  const auto dx = pool_backward(x.shape(), w, PoolMode::Max, fwd, Tensor64(Shape{1, 1, 1, 1}, 3.0));
  EXPECT_EQ(test::vec(dx), (std::vector<double>{3, 0, 0, 0}));
}

TEST(Pool, MaxValidShape) {
  const auto x = randn(Shape{1, 31, 31, 2}, 30);
  EXPECT_EQ(pool_forward(x, Window2D{3, 3, 2, Padding::Valid}, PoolMode::Max).y.shape(), (Shape{1, 15, 15, 2}));
}

TEST(Dropout, KeepOneAndEvalAreIdentity) {
  const auto x = randn(Shape{3, 10}, 40);
  CounterRng rng(1, "dropout");
  EXPECT_EQ(dropout_forward(x, 1.0, Mode::Train, rng).y, x);
  EXPECT_EQ(dropout_forward(x, 0.5, Mode::Eval, rng).y, x);
}

TEST(Dropout, KeptFractionAndScaling) {
  const Tensor x(Shape{1000000}, 1.0f);
  CounterRng rng(7, "dropout");
  const auto r = dropout_forward(x, 0.5, Mode::Train, rng);
  std::size_t kept = 0;
  for (float v : r.y) {
    ASSERT_TRUE(v == 0.0f || v == 2.0f);
    kept += v != 0.0f;
  }
  EXPECT_NEAR(kept / 1e6, 0.5, 0.002);
}

TEST(Dropout, RejectsBadKeepProbability) {
  CounterRng rng(1, "dropout");
  EXPECT_THROW(dropout_forward(Tensor(Shape{2}), 0.0, Mode::Train, rng), DomainError);
  EXPECT_THROW(dropout_forward(Tensor(Shape{2}), 1.5, Mode::Train, rng), DomainError);
}

TEST(InitVariance, Examples) {
  EXPECT_DOUBLE_EQ(init_variance(ActivationKind::eru(1), 100), 0.02);
  EXPECT_DOUBLE_EQ(init_variance(ActivationKind::oru(2), 128), 2.0 / (128 * 2));
  EXPECT_NEAR(init_variance(ActivationKind::eru(3), 784), 6.0 / (784 * 7), 1e-18);
  EXPECT_NEAR(init_variance(ActivationKind::eru(3), 784), 1.0933e-3, 1e-7);
  EXPECT_THROW(init_variance(ActivationKind::relu(), 0), DomainError);
}

TEST(InitVariance, UnitRadixMatchesFanIn) {
  for (long n : {1L, 10L, 784L, 3072L}) {
    EXPECT_DOUBLE_EQ(init_variance(ActivationKind::eru(1), n), init_variance(ActivationKind::relu(), n));
    EXPECT_DOUBLE_EQ(init_variance(ActivationKind::oru(1), n), 2.0 / n);
    EXPECT_DOUBLE_EQ(init_variance(ActivationKind::elu(), n), 2.0 / n);
    EXPECT_DOUBLE_EQ(init_variance(ActivationKind::softmax(), n), 2.0 / n);
    EXPECT_DOUBLE_EQ(init_variance(ActivationKind::sigmoid(), n), 2.0 / n);
  }
}

TEST(InitVariance, DecreasesWithRadix) {
  for (long n : {128L, 784L}) {
    double pe = INFINITY, po = INFINITY;
    for (double r : {0.5, 1.0, 2.0, 3.0, 4.5}) {
      EXPECT_LT(init_variance(ActivationKind::eru(r), n), pe);
      EXPECT_LT(init_variance(ActivationKind::oru(r), n), po);
      pe = init_variance(ActivationKind::eru(r), n);
      po = init_variance(ActivationKind::oru(r), n);
    }
  }
}

TEST(SampleWeights, MomentsAndDeterminism) {
  const InitSpec spec = InitSpec::for_layer(ActivationKind::oru(2), 128);
  const auto w = sample_weights<double>(spec, Shape{128, 7813}, 99);
  double s = 0, s2 = 0;
  for (double v : w) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(w.size());
  EXPECT_NEAR(s / n, 0.0, 5 * std::sqrt(spec.variance) / 1e3);
  EXPECT_NEAR((s2 / n) / spec.variance, 1.0, 0.01);
  EXPECT_EQ(w, (sample_weights<double>(spec, Shape{128, 7813}, 99)));
  EXPECT_NE(w, (sample_weights<double>(spec, Shape{128, 7813}, 98)));
}

TEST(SampleWeights, FanInMustMatchShape) {
  EXPECT_EQ(fan_in_of(Shape{5, 5, 6, 16}), 150u);
  EXPECT_EQ(fan_in_of(Shape{784, 128}), 784u);
  EXPECT_THROW(sample_weights<float>(InitSpec{100, 0.02}, Shape{784, 128}, 1), ShapeError);
}

// Vector-Jacobian products of each primitive against central differences.
namespace {

template <typename F>
void expect_vjp(const Tensor64& x, const Tensor64& dx, F f, double tol = 1e-7) {
  const auto num = fd_gradient<double>([&](const Tensor64& p) { return f(p); }, x, 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i)
    ASSERT_LT(std::fabs(num[i] - dx[i]), tol * std::max(1.0, std::fabs(dx[i]))) << "coordinate " << i;
}

}  // namespace

TEST(LayerVjp, ConvAgainstFiniteDifferences) {
  const auto x = randn(Shape{1, 5, 5, 2}, 50), k = randn(Shape{3, 3, 2, 2}, 51);
  for (Padding p : {Padding::Same, Padding::Valid}) {
    const auto dy = randn(conv2d(x, k, 2, p).shape(), 52);
    const auto g = conv2d_backward(x, k, dy, 2, p);
    expect_vjp(x, g.dx, [&](const Tensor64& v) { return dot(dy, conv2d(v, k, 2, p)); });
    expect_vjp(k, g.dkernels, [&](const Tensor64& v) { return dot(dy, conv2d(x, v, 2, p)); });
  }
}

TEST(LayerVjp, PoolAgainstFiniteDifferences) {
  const auto x = randn(Shape{1, 5, 5, 2}, 60);
  for (PoolMode m : {PoolMode::Avg, PoolMode::Max})
    for (Window2D w : {Window2D{2, 2, 2, Padding::Same}, Window2D{3, 3, 2, Padding::Valid},
                       Window2D{3, 3, 1, Padding::Same}}) {
      const auto fwd = pool_forward(x, w, m);
      const auto dy = randn(fwd.y.shape(), 61);
      const auto dx = pool_backward(x.shape(), w, m, fwd, dy);
      expect_vjp(x, dx, [&](const Tensor64& v) { return dot(dy, pool_forward(v, w, m).y); });
    }
}

TEST(LayerVjp, DenseAndBiasAgainstFiniteDifferences) {
  const auto x = randn(Shape{3, 4}, 70), w = randn(Shape{4, 5}, 71), b = randn(Shape{5}, 72);
  const auto dy = randn(Shape{3, 5}, 73);
  const auto g = matmul_backward(x, w, dy);
  expect_vjp(x, g.dx, [&](const Tensor64& v) { return dot(dy, dense_forward(v, w, b)); });
  expect_vjp(w, g.dw, [&](const Tensor64& v) { return dot(dy, dense_forward(x, v, b)); });
  expect_vjp(b, add_bias_backward(dy), [&](const Tensor64& v) { return dot(dy, dense_forward(x, w, v)); });
}
