#include <gtest/gtest.h>

#include <random>

#include "pie/polykernel.hpp"
#include "pie/quadrature.hpp"

using namespace pie;

namespace {

Exponent ex(int x, int y = 0, int th = 0, int et = 0) {
  return Exponent{static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y),
                  static_cast<std::uint8_t>(th), static_cast<std::uint8_t>(et), 0, 0};
}

double ev(const PolyKernel& p, double x, double y = 0, double th = 0, double et = 0) {
  return p.eval(Point{x, y, th, et, 0, 0})(0, 0);
}

PolyKernel X() { return PolyKernel::variable(Var::X); }
PolyKernel Y() { return PolyKernel::variable(Var::Y); }
PolyKernel TH() { return PolyKernel::variable(Var::Theta); }

}  // namespace

TEST(PolyKernel, AddCancelsToEmptyMap) {
  PolyKernel s = X() + (-X());
  EXPECT_TRUE(s.is_zero());
  EXPECT_EQ(s.num_terms(), 0u);
  EXPECT_EQ(X() + PolyKernel::zero(1, 1), X());
}

TEST(PolyKernel, AddCollectsLikeTerms) {
  PolyKernel a = PolyKernel::monomial(ex(1, 1), 2.0);
  PolyKernel b = PolyKernel::monomial(ex(1, 1), 3.0) + TH();
  PolyKernel s = a + b;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10; ++i) {
    double x = u(rng), y = u(rng), t = u(rng);
    EXPECT_NEAR(ev(s, x, y, t), 5 * x * y + t, 1e-14);
  }
  EXPECT_EQ(s.num_terms(), 2u);
}

TEST(PolyKernel, ProductMatchesPointwise) {
  PolyKernel d = X() - TH();
  PolyKernel sq = d * d;
  PolyKernel expect = PolyKernel::monomial(ex(2)) - PolyKernel::monomial(ex(1, 0, 1), 2.0) +
                      PolyKernel::monomial(ex(0, 0, 2));
  EXPECT_EQ(sq, expect);
  EXPECT_EQ((X() + TH()) * Y(), PolyKernel::monomial(ex(1, 1)) + PolyKernel::monomial(ex(0, 1, 1)));
  EXPECT_EQ(PolyKernel::scalar(1.0) * sq, sq);
}

TEST(PolyKernel, MatrixProductDimensions) {
  PolyKernel a(2, 3), b(2, 2);
  EXPECT_THROW(a * b, DimensionError);
  EXPECT_THROW(a + b, DimensionError);
}

TEST(PolyKernel, IntegrationWithVariableLimits) {
  EXPECT_EQ(TH().integrate(Var::Theta, Limit::constant(0), Limit::variable(Var::X)),
            PolyKernel::monomial(ex(2), 0.5));
  EXPECT_EQ(PolyKernel::scalar(1).integrate(Var::Theta, Limit::constant(0), Limit::constant(1)),
            PolyKernel::scalar(1));
  PolyKernel p = PolyKernel::monomial(ex(1, 0, 2));
  PolyKernel r = p.integrate(Var::Theta, Limit::variable(Var::X), Limit::constant(1));
  EXPECT_TRUE(r.approx_equal(PolyKernel::monomial(ex(1), 1.0 / 3) - PolyKernel::monomial(ex(4), 1.0 / 3),
                             1e-15));
  // Quadrature cross-check.
  for (double x : {0.1, 0.5, 0.9}) {
    GaussRule g = gauss_legendre(8, x, 1.0);
    double q = 0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) q += g.weights[i] * x * g.nodes[i] * g.nodes[i];
    EXPECT_NEAR(ev(r, x), q, 1e-14);
  }
}

TEST(PolyKernel, IntegrationLimitMayNotBeOwnVariable) {
  EXPECT_THROW(TH().integrate(Var::Theta, Limit::constant(0), Limit::variable(Var::Theta)),
               std::invalid_argument);
}

TEST(PolyKernel, Differentiation) {
  EXPECT_EQ(PolyKernel::monomial(ex(2, 1)).diff(Var::X), PolyKernel::monomial(ex(1, 1), 2.0));
  EXPECT_TRUE(PolyKernel::monomial(ex(1, 1)).diff(Var::Theta).is_zero());
  PolyKernel p = PolyKernel::monomial(ex(2), 0.5) - PolyKernel::monomial(ex(1, 2));
  PolyKernel d = p.diff(Var::Y);
  const double h = 1e-6;
  for (double x : {0.2, 0.7}) {
    for (double y : {0.3, 0.8}) {
      double fd = (ev(p, x, y + h) - ev(p, x, y - h)) / (2 * h);
      EXPECT_NEAR(ev(d, x, y), fd, 1e-8);
      EXPECT_NEAR(ev(d, x, y), -2 * x * y, 1e-14);
    }
  }
}

TEST(PolyKernel, Substitution) {
  PolyKernel p = PolyKernel::monomial(ex(1, 0, 1)) + PolyKernel::monomial(ex(0, 0, 2), 3.0);
  EXPECT_EQ(p.subs(Var::Theta, Limit::constant(0.0)), PolyKernel::zero(1, 1));
  EXPECT_EQ(p.subs(Var::Theta, Limit::variable(Var::X)), PolyKernel::monomial(ex(2), 4.0));
  EXPECT_EQ(p.subs(Var::X, Limit::constant(1.0)),
            TH() + PolyKernel::monomial(ex(0, 0, 2), 3.0));
}

TEST(PolyKernel, DegreeBoundEnforced) {
  Exponent e = ex(0);
  e[0] = kMaxDegreePerVar + 1;
  EXPECT_THROW(PolyKernel::monomial(e), std::overflow_error);
}

TEST(PolyKernel, TransposeAndBlocks) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  PolyKernel k = PolyKernel::monomial(ex(1), m);
  EXPECT_EQ(k.transpose().rows(), 3);
  EXPECT_EQ(k.transpose().transpose(), k);
  PolyKernel b = k.block(1, 1, 1, 2);
  EXPECT_DOUBLE_EQ(b.eval(Point{2, 0, 0, 0, 0, 0})(0, 1), 12.0);
  PolyKernel big(3, 4);
  big.set_block(1, 1, k);
  EXPECT_EQ(big.block(1, 1, 2, 3), k);
}

TEST(MonomialBasis, SizeAndOrder) {
  MonomialBasis b({Var::X, Var::Y}, 2);
  EXPECT_EQ(b.size(), 6u);
  EXPECT_EQ(b[0], ex(0));
  EXPECT_EQ(b[1], ex(1));
  EXPECT_EQ(b[2], ex(0, 1));
  MonomialBasis c({Var::X, Var::Y, Var::Theta, Var::Eta}, 3);
  EXPECT_EQ(c.size(), 35u);
  PolyKernel k = b.as_kernel(2);
  EXPECT_EQ(k.rows(), 12);
  EXPECT_EQ(k.cols(), 2);
}

TEST(Legendre, Orthonormal) {
  auto l = legendre_basis(5);
  for (int i = 0; i <= 5; ++i) {
    for (int j = 0; j <= 5; ++j) {
      double v = ev((l[i] * l[j]).integrate(Var::X, Limit::constant(0), Limit::constant(1)), 0);
      // Monomial-form integration loses digits to cancellation.
      EXPECT_NEAR(v, i == j ? 1.0 : 0.0, 1e-9);
      GaussRule g = gauss_legendre(8);
      double q = 0;
      for (std::size_t k = 0; k < g.nodes.size(); ++k) q += g.weights[k] * ev(l[i], g.nodes[k]) * ev(l[j], g.nodes[k]);
      EXPECT_NEAR(q, i == j ? 1.0 : 0.0, 1e-13);
    }
  }
}

TEST(Quadrature, IntegratesPolynomialsExactly) {
  GaussRule g = gauss_legendre(5);
  for (int k = 0; k <= 9; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) s += g.weights[i] * std::pow(g.nodes[i], k);
    EXPECT_NEAR(s, 1.0 / (k + 1), 1e-14);
  }
}
