#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "bru/activation.hpp"
#include "bru/errors.hpp"
#include "bru/rng.hpp"

using namespace bru;

namespace {

// Reference transfer functions written straight from the formulas with
// std::pow and long double, without the integer-radix fast paths.
long double ref_eru(long double z, long double r) {
  return z >= 0 ? std::pow(r * r * z + 1, 1 / r) - 1 / r : std::exp(r * z) - 1 / r;
}
long double ref_eru_slope(long double z, long double r) {
  return z >= 0 ? r * std::pow(r * r * z + 1, (1 - r) / r) : r * std::exp(r * z);
}
long double ref_oru(long double z, long double r) {
  const long double m = std::pow(r * r * std::fabs(z) + 1, 1 / r) - 1;
  return z < 0 ? -m : m;
}
long double ref_oru_slope(long double z, long double r) {
  return r * std::pow(r * r * std::fabs(z) + 1, (1 - r) / r);
}

}  // namespace

TEST(Radix, RejectsNonPositiveAndNonFinite) {
  EXPECT_THROW((void)Radix(0.0), DomainError);
  EXPECT_THROW((void)Radix(-1.0), DomainError);
  EXPECT_THROW((void)Radix(std::nan("")), DomainError);
  EXPECT_THROW((void)Radix(INFINITY), DomainError);
  EXPECT_DOUBLE_EQ(Radix(2.5).value(), 2.5);
}

TEST(ActivationKind, RadixOnlyOnRootUnits) {
  EXPECT_TRUE(ActivationKind::eru(2).has_radix());
  EXPECT_TRUE(ActivationKind::oru(3).has_radix());
  EXPECT_FALSE(ActivationKind::relu().has_radix());
  EXPECT_THROW(ActivationKind::elu().radix(), UnsupportedError);
}

TEST(ActivationKind, NamesRoundTrip) {
  EXPECT_EQ(ActivationKind::eru(2).name(), "E2RU");
  EXPECT_EQ(ActivationKind::oru(3).name(), "O3RU");
  for (const auto& k : {ActivationKind::relu(), ActivationKind::elu(), ActivationKind::sigmoid(),
                        ActivationKind::identity(), ActivationKind::softmax(), ActivationKind::eru(1),
                        ActivationKind::oru(2), ActivationKind::eru(2.5), ActivationKind::oru(0.75)})
    EXPECT_EQ(ActivationKind::parse(k.name()), k) << k.name();
}

TEST(EruForward, Examples) {
  EXPECT_DOUBLE_EQ(eru_forward(0.0, Radix(2)), 0.5);
  EXPECT_DOUBLE_EQ(eru_forward(2.0, Radix(2)), 2.5);
  EXPECT_DOUBLE_EQ(eru_forward(1.0, Radix(1)), 1.0);
  const double want = static_cast<double>(std::exp(-2.0L) - 0.5L);
  EXPECT_NEAR(eru_forward(-1.0, Radix(2)), want, 1e-15);
  EXPECT_NEAR(eru_forward(-1.0, Radix(2)), -0.3646647, 1e-7);
}

TEST(EruDerivative, Examples) {
  EXPECT_DOUBLE_EQ(eru_derivative(0.0, Radix(3)), 3.0);
  EXPECT_NEAR(eru_derivative(2.0, Radix(2)), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(eru_derivative(-1.0, Radix(1)), static_cast<double>(std::exp(-1.0L)), 1e-15);
  EXPECT_NEAR(eru_derivative(-1.0, Radix(1)), 0.3678794, 1e-7);
}

TEST(OruForward, Examples) {
  EXPECT_EQ(oru_forward(0.0, Radix(3)), 0.0);
  EXPECT_DOUBLE_EQ(oru_forward(2.0, Radix(2)), 2.0);
  EXPECT_DOUBLE_EQ(oru_forward(-2.0, Radix(2)), -2.0);
  EXPECT_DOUBLE_EQ(oru_forward(5.0, Radix(1)), 5.0);
}

TEST(OruDerivative, Examples) {
  EXPECT_DOUBLE_EQ(oru_derivative(0.0, Radix(2)), 2.0);
  EXPECT_NEAR(oru_derivative(2.0, Radix(2)), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(oru_derivative(-2.0, Radix(2)), 2.0 / 3.0, 1e-15);
}

TEST(RootUnits, RejectNonFiniteInput) {
  EXPECT_THROW(eru_forward(std::nan(""), Radix(2)), DomainError);
  EXPECT_THROW(oru_forward(INFINITY, Radix(2)), DomainError);
  EXPECT_THROW(eru_derivative(-INFINITY, Radix(2)), DomainError);
  EXPECT_THROW(oru_derivative(std::nan(""), Radix(2)), DomainError);
}

TEST(RootUnits, FastPathsAgreeWithGeneralFormula) {
  for (double r : {1.0, 2.0, 3.0, 2.5, 5.0})
    for (int i = -300; i <= 300; ++i) {
      const double z = i * 0.0333;
      const double tol = 1e-14 * std::max(1.0, std::fabs(z));
      EXPECT_NEAR(eru_forward(z, Radix(r)), static_cast<double>(ref_eru(z, r)), tol) << r << " " << z;
      EXPECT_NEAR(oru_forward(z, Radix(r)), static_cast<double>(ref_oru(z, r)), tol) << r << " " << z;
      EXPECT_NEAR(eru_derivative(z, Radix(r)), static_cast<double>(ref_eru_slope(z, r)), 1e-14 * r);
      EXPECT_NEAR(oru_derivative(z, Radix(r)), static_cast<double>(ref_oru_slope(z, r)), 1e-14 * r);
    }
}

TEST(RootUnits, ContinuousAtZero) {
  const double eps = 1e-9;
  for (double r : {1.0, 2.0, 3.0, 5.0}) {
    EXPECT_LT(std::fabs(eru_forward(eps, Radix(r)) - eru_forward(-eps, Radix(r))), 1e-7);
    EXPECT_LT(std::fabs(oru_forward(eps, Radix(r)) - oru_forward(-eps, Radix(r))), 1e-7);
    EXPECT_NEAR(eru_forward(0.0, Radix(r)), 1.0 - 1.0 / r, 1e-15);
  }
}

TEST(RootUnits, DerivativesMatchCentralDifferences) {
  CounterRng rng(3, "test");
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const double z = -3.0 + 6.0 * rng.uniform();
    for (double r : {1.0, 2.0, 3.0}) {
      const Radix rx(r);
      const double fe = (eru_forward(z + h, rx) - eru_forward(z - h, rx)) / (2 * h);
      const double fo = (oru_forward(z + h, rx) - oru_forward(z - h, rx)) / (2 * h);
      const double ae = eru_derivative(z, rx), ao = oru_derivative(z, rx);
      EXPECT_LT(std::fabs(ae - fe) / std::fabs(ae), 1e-5) << "ERU r=" << r << " z=" << z;
      EXPECT_LT(std::fabs(ao - fo) / std::fabs(ao), 1e-5) << "ORU r=" << r << " z=" << z;
    }
  }
}

TEST(RootUnits, SlopeBoundedByRadixWithEqualityOnlyAtZero) {
  for (double r : {2.0, 3.0, 5.0}) {
    EXPECT_DOUBLE_EQ(eru_derivative(0.0, Radix(r)), r);
    EXPECT_DOUBLE_EQ(oru_derivative(0.0, Radix(r)), r);
    for (int i = -100; i <= 100; ++i) {
      if (i == 0) continue;
      const double z = i * 0.05;
      EXPECT_LT(eru_derivative(z, Radix(r)), r);
      EXPECT_LT(oru_derivative(z, Radix(r)), r);
      EXPECT_GT(eru_derivative(z, Radix(r)), 0.0);
      EXPECT_GT(oru_derivative(z, Radix(r)), 0.0);
    }
  }
  // r = 1: the ERU slope is flat at 1 for z >= 0 and the ORU is the identity.
  for (double z : {0.5, 2.0}) EXPECT_DOUBLE_EQ(eru_derivative(z, Radix(1)), 1.0);
  EXPECT_LT(eru_derivative(-0.5, Radix(1)), 1.0);
}

TEST(RootUnits, ReducedForms) {
  for (int i = -1000; i <= 1000; ++i) {
    const double z = i * 0.01;
    EXPECT_NEAR(eru_forward(z, Radix(1)), std::expm1(std::min(z, 0.0)) + std::max(z, 0.0), 1e-12);
    EXPECT_NEAR(oru_forward(z, Radix(1)), z, 1e-12);
  }
}

TEST(RootUnits, OruIsExactlyOdd) {
  CounterRng rng(5, "test");
  for (int i = 0; i < 2000; ++i) {
    const double z = 20.0 * (rng.uniform() - 0.5);
    for (double r : {1.0, 2.0, 3.0, 1.7})
      EXPECT_EQ(oru_forward(-z, Radix(r)), -oru_forward(z, Radix(r)));
  }
}

TEST(RootUnits, StrictlyIncreasing) {
  for (double r : {1.0, 2.0, 3.0}) {
    double pe = eru_forward(-5.0, Radix(r)), po = oru_forward(-5.0, Radix(r));
    for (int i = -499; i <= 500; ++i) {
      const double z = i * 0.01;
      const double e = eru_forward(z, Radix(r)), o = oru_forward(z, Radix(r));
      EXPECT_GT(e, pe);
      EXPECT_GT(o, po);
      pe = e;
      po = o;
    }
  }
}

TEST(RootUnits, ExponentialUnderflowReachesAsymptote) {
  EXPECT_DOUBLE_EQ(eru_forward(-1e6, Radix(2)), -0.5);
  EXPECT_EQ(eru_derivative(-1e6, Radix(2)), 0.0);
}

TEST(ActivationApply, Examples) {
  const Tensor64 x(Shape{3}, {-1, 0, 2});
  EXPECT_EQ(test::vec(activation_apply(ActivationKind::relu(), x)), (std::vector<double>{0, 0, 2}));
  const auto e1 = activation_apply(ActivationKind::eru(1), x);
  const auto elu = activation_apply(ActivationKind::elu(), x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(e1[i], elu[i], 1e-12);
  const auto sm = activation_apply(ActivationKind::softmax(), Tensor64(Shape{1, 2}, {0, 0}));
  EXPECT_DOUBLE_EQ(sm[0], 0.5);
  EXPECT_DOUBLE_EQ(sm[1], 0.5);
}

TEST(ActivationApply, SoftmaxRowsSumToOne) {
  CounterRng rng(9, "test");
  Tensor64 x(Shape{5, 7});
  for (auto& v : x) v = 30.0 * rng.normal();
  const auto y = activation_apply(ActivationKind::softmax(), x);
  EXPECT_EQ(y.shape(), x.shape());
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += y[r * 7 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(ActivationApply, RejectsNonFinite) {
  const Tensor64 x(Shape{2}, {0.0, std::nan("")});
  EXPECT_THROW(activation_apply(ActivationKind::oru(2), x), DomainError);
}

TEST(ActivationDerivative, Examples) {
  EXPECT_EQ(test::vec(activation_derivative(ActivationKind::relu(), Tensor64(Shape{2}, {-1, 2}))),
            (std::vector<double>{0, 1}));
  EXPECT_EQ(activate_derivative(ActivationKind::relu(), 0.0), 0.0);
  const auto ones = activation_derivative(ActivationKind::oru(1), Tensor64(Shape{4}, {-3, -0.1, 0, 7}));
  for (double v : ones) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_DOUBLE_EQ(activation_derivative(ActivationKind::eru(2), Tensor64(Shape{1}, {0}))[0], 2.0);
  EXPECT_THROW(activation_derivative(ActivationKind::softmax(), Tensor64(Shape{1, 2})), UnsupportedError);
}

TEST(ActivationApply, FloatMatchesDouble) {
  for (const auto& k : {ActivationKind::eru(3), ActivationKind::oru(2), ActivationKind::sigmoid()})
    for (int i = -40; i <= 40; ++i) {
      const double z = i * 0.125;
      EXPECT_NEAR(activate<float>(k, static_cast<float>(z)), activate<double>(k, z),
                  1e-6 * std::max(1.0, std::fabs(activate<double>(k, z))));
    }
}
