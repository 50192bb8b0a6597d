#include <gtest/gtest.h>

#include <random>

#include "pie/inversion.hpp"
#include "pie/quadrature.hpp"

using namespace pie;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Exponent xy(int a, int b, int c = 0, int d = 0) {
  Exponent e{};
  e[static_cast<int>(Var::X)] = a;
  e[static_cast<int>(Var::Y)] = b;
  e[static_cast<int>(Var::Theta)] = c;
  e[static_cast<int>(Var::Eta)] = d;
  return e;
}

PolyKernel random_poly(std::mt19937_64& rng, int rows, int cols, int deg) {
  std::normal_distribution<double> g;
  PolyKernel k(rows, cols);
  const MonomialBasis mb({Var::X, Var::Y}, deg);
  for (const Exponent& e : mb.exponents()) {
    k.add_term(e, MatrixXd::NullaryExpr(rows, cols, [&]() { return g(rng); }));
  }
  return k;
}

// R0 = I + S(x,y)^T S(x,y), uniformly positive definite.
SeparableOp random_separable(std::mt19937_64& rng, int n, int p) {
  std::normal_distribution<double> g;
  SeparableOp s;
  const PolyKernel S = random_poly(rng, n, n, 1) * 0.5;
  s.R0 = PolyKernel::identity(n) + S.transpose() * S;
  s.Z = random_poly(rng, p, n, 2);
  s.H = MatrixXd::NullaryExpr(p, p, [&]() { return 0.3 * g(rng); });
  return s;
}

// L2 norm of a field on [0,1]^2 by a fine tensor rule.
double l2_norm(const VectorField& f) {
  const GaussRule g = gauss_legendre(20);
  double acc = 0.0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      acc += g.weights[i] * g.weights[j] * f(g.nodes[i], g.nodes[j]).squaredNorm();
    }
  }
  return std::sqrt(acc);
}

VectorField diff(const VectorField& a, const VectorField& b) {
  return [a, b](double x, double y) -> VectorXd { return a(x, y) - b(x, y); };
}

}  // namespace

TEST(Separate, IdentityHasNoIntegralPart) {
  const SeparableOp s = separate(BlockPiOp::identity(SpaceSignature::plane(2)));
  EXPECT_TRUE(s.R0.approx_equal(PolyKernel::identity(2), 0.0));
  EXPECT_EQ(s.H.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Separate, RankOneMonomial) {
  BlockPiOp op = BlockPiOp::multiplier(PolyKernel::scalar(1.0));
  for (Rel rx : {Rel::Lower, Rel::Upper}) {
    for (Rel ry : {Rel::Lower, Rel::Upper}) op.add_term(Space::XY, Space::XY, rx, ry, PolyKernel::monomial(xy(1, 0, 1, 0)));
  }
  const SeparableOp s = separate(op);
  ASSERT_EQ(s.p(), 1);
  EXPECT_TRUE(s.Z.approx_equal(PolyKernel::monomial(xy(1, 0)), 0.0));
  EXPECT_EQ(s.H(0, 0), 1.0);
}

TEST(Separate, SymmetricPairOfMonomials) {
  // xy + theta eta = [1, xy] [[0, 1], [1, 0]] [1, theta eta]^T
  BlockPiOp op(SpaceSignature::plane(1), SpaceSignature::plane(1));
  const PolyKernel k = PolyKernel::monomial(xy(1, 1, 0, 0)) + PolyKernel::monomial(xy(0, 0, 1, 1));
  for (Rel rx : {Rel::Lower, Rel::Upper}) {
    for (Rel ry : {Rel::Lower, Rel::Upper}) op.add_term(Space::XY, Space::XY, rx, ry, k);
  }
  const SeparableOp s = separate(op);
  ASSERT_EQ(s.p(), 2);
  EXPECT_TRUE(s.Z.block(0, 0, 1, 1).approx_equal(PolyKernel::scalar(1.0), 0.0));
  EXPECT_TRUE(s.Z.block(1, 0, 1, 1).approx_equal(PolyKernel::monomial(xy(1, 1)), 0.0));
  EXPECT_EQ(s.H(0, 0), 0.0);
  EXPECT_EQ(s.H(0, 1), 1.0);
  EXPECT_EQ(s.H(1, 0), 1.0);
  EXPECT_EQ(s.H(1, 1), 0.0);
  EXPECT_TRUE(s.to_pi().approx_equal(op, 1e-15));
}

TEST(Separate, RejectsOtherStructures) {
  BlockPiOp op(SpaceSignature::plane(1), SpaceSignature::plane(1));
  op.add_term(Space::XY, Space::XY, Rel::Lower, Rel::Lower, PolyKernel::scalar(1.0));
  EXPECT_THROW(separate(op), StructureError);
  BlockPiOp semi(SpaceSignature::plane(1), SpaceSignature::plane(1));
  semi.add_term(Space::XY, Space::XY, Rel::Mult, Rel::Lower, PolyKernel::scalar(1.0));
  EXPECT_THROW(separate(semi), StructureError);
}

TEST(Separate, RoundTripOnRandomOperators) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const SeparableOp s = random_separable(rng, 2, 3);
    const BlockPiOp op = s.to_pi();
    EXPECT_TRUE(separate(op).to_pi().approx_equal(op, 1e-12));
  }
}

TEST(Inverse, HandDerivedScalarCase) {
  // R0 = 2, Z = 1, H = 1: K = 1/2, Hhat = -2/3, Q1 = (1/2)(-2/3)(1/2) = -1/6.
  SeparableOp s;
  s.R0 = PolyKernel::scalar(2.0);
  s.Z = PolyKernel::scalar(1.0);
  s.H = MatrixXd::Constant(1, 1, 1.0);
  const EvaluableOp q = invert(s);
  EXPECT_NEAR(q.core()(0, 0), -2.0 / 3.0, 1e-14);
  EXPECT_NEAR(q.multiplier(0.3, 0.7)(0, 0), 0.5, 1e-15);
  const double q1 = q.left(0.2, 0.4)(0, 0) * q.core()(0, 0) * q.right(0.9, 0.1)(0, 0);
  EXPECT_NEAR(q1, -1.0 / 6.0, 1e-14);

  // Symbolic oracle: the polynomial operator M[1/2] - (1/6) int int is a
  // two-sided inverse of M[2] + int int.
  SeparableOp qs;
  qs.R0 = PolyKernel::scalar(0.5);
  qs.Z = PolyKernel::scalar(1.0);
  qs.H = MatrixXd::Constant(1, 1, -1.0 / 6.0);
  const BlockPiOp id = BlockPiOp::identity(SpaceSignature::plane(1));
  EXPECT_TRUE(pi_compose(qs.to_pi(), s.to_pi()).approx_equal(id, 1e-15));
  EXPECT_TRUE(pi_compose(s.to_pi(), qs.to_pi()).approx_equal(id, 1e-15));
}

TEST(Inverse, IdentityIsSelfInverse) {
  SeparableOp s;
  s.R0 = PolyKernel::identity(2);
  s.Z = PolyKernel::identity(2);
  s.H = MatrixXd::Zero(2, 2);
  const EvaluableOp q = invert(s);
  std::mt19937_64 rng(1);
  const VectorField v = plane_field(random_poly(rng, 2, 1, 3));
  EXPECT_LT(l2_norm(diff(q.apply(v), v)), 1e-14);
}

TEST(Inverse, TwoSidedRoundTrip) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial % 2;
    const SeparableOp s = random_separable(rng, n, 2 + trial % 3);
    const EvaluableOp q = invert(s);
    const EvaluableOp r = EvaluableOp::from_separable(s, q.order());
    for (int k = 0; k < 10; ++k) {
      const PolyKernel vp = random_poly(rng, n, 1, 3);
      const VectorField v = plane_field(vp);
      const double nv = l2_norm(v);
      // Q(R v) with R v exact.
      const VectorField rv = plane_field(pi_apply(s.to_pi(), FunctionVector::plane(vp))[Space::XY]);
      EXPECT_LT(l2_norm(diff(q.apply(rv), v)) / nv, 1e-8) << "trial " << trial;
      // R(Q v) by quadrature.
      EXPECT_LT(l2_norm(diff(r.apply(q.apply(v)), v)) / nv, 1e-8) << "trial " << trial;
    }
  }
}

TEST(Inverse, InvolutionRecoversOperator) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const SeparableOp s = random_separable(rng, 2, 3);
    const EvaluableOp qq = invert(invert(s));
    for (int k = 0; k < 5; ++k) {
      const PolyKernel vp = random_poly(rng, 2, 1, 3);
      const VectorField rv = plane_field(pi_apply(s.to_pi(), FunctionVector::plane(vp))[Space::XY]);
      const VectorField v = plane_field(vp);
      EXPECT_LT(l2_norm(diff(qq.apply(v), rv)) / l2_norm(rv), 1e-7);
    }
  }
}

TEST(Inverse, CoreMatchesBothFactorizations) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 1 + trial % 5;
    const MatrixXd H = MatrixXd::NullaryExpr(p, p, [&]() { return g(rng); });
    const MatrixXd K = MatrixXd::NullaryExpr(p, p, [&]() { return 0.3 * g(rng); });
    const MatrixXd I = MatrixXd::Identity(p, p);
    const MatrixXd other = -(I + H * K).fullPivLu().solve(H);
    EXPECT_LT((inverse_core(H, K) - other).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + other.cwiseAbs().maxCoeff()));
  }
}

TEST(Inverse, ReportsSingularOperators) {
  // M[1] - int int annihilates constants: I + K H = 0.
  SeparableOp s;
  s.R0 = PolyKernel::scalar(1.0);
  s.Z = PolyKernel::scalar(1.0);
  s.H = MatrixXd::Constant(1, 1, -1.0);
  EXPECT_THROW(invert(s), InversionError);
  s.R0 = PolyKernel::scalar(0.0);
  s.H = MatrixXd::Constant(1, 1, 1.0);
  EXPECT_THROW(invert(s), InversionError);
}

TEST(Gain, IdentityAndScaledP) {
  std::mt19937_64 rng(14);
  const SpaceSignature q_sig{0, 1, 1, 0};
  BlockPiOp W(SpaceSignature::plane(1), q_sig);
  W.add_term(Space::XY, Space::X, Rel::Mult, Rel::Ext, random_poly(rng, 1, 1, 2));
  W.add_term(Space::XY, Space::Y, Rel::Ext, Rel::Lower, PolyKernel::monomial(xy(1, 0, 0, 1)));
  FunctionVector q(q_sig);
  q[Space::X] = PolyKernel::monomial(xy(2, 0)) + PolyKernel::scalar(0.5);
  q[Space::Y] = PolyKernel::monomial(xy(0, 1));
  const VectorField wq = plane_field(pi_apply(W, q)[Space::XY]);

  SeparableOp one;
  one.R0 = PolyKernel::scalar(1.0);
  one.Z = PolyKernel::scalar(1.0);
  one.H = MatrixXd::Zero(1, 1);
  EXPECT_LT(l2_norm(diff(reconstruct_gain(invert(one), W).apply(q), wq)), 1e-14);

  SeparableOp two = one;
  two.R0 = PolyKernel::scalar(2.0);
  const VectorField half = [wq](double x, double y) -> VectorXd { return 0.5 * wq(x, y); };
  EXPECT_LT(l2_norm(diff(reconstruct_gain(invert(two), W).apply(q), half)), 1e-14);
}

TEST(Gain, RecoversWThroughP) {
  std::mt19937_64 rng(15);
  const SeparableOp p = random_separable(rng, 1, 3);
  const SpaceSignature q_sig{1, 0, 1, 0};
  BlockPiOp W(SpaceSignature::plane(1), q_sig);
  W.add_term(Space::XY, Space::R, Rel::Ext, Rel::Ext, random_poly(rng, 1, 1, 2));
  W.add_term(Space::XY, Space::Y, Rel::Ext, Rel::Mult, random_poly(rng, 1, 1, 2));
  FunctionVector q(q_sig);
  q[Space::R] = PolyKernel::scalar(0.7);
  q[Space::Y] = PolyKernel::monomial(xy(0, 2)) - PolyKernel::scalar(0.3);
  const GainOp L = reconstruct_gain(invert(p), W);
  const EvaluableOp pe = EvaluableOp::from_separable(p, L.p_inv().order());
  const VectorField wq = plane_field(pi_apply(W, q)[Space::XY]);
  EXPECT_LT(l2_norm(diff(pe.apply(L.apply(q)), wq)) / l2_norm(wq), 1e-7);
}
