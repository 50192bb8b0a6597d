#include <gtest/gtest.h>

#include "pie/piop.hpp"
#include "pie/random_ops.hpp"

using namespace pie;
using namespace pie::testing;

namespace {

PolyKernel one() { return PolyKernel::scalar(1.0); }
PolyKernel var(Var v) { return PolyKernel::variable(v); }

Exponent ex(int x, int y = 0, int th = 0, int et = 0) {
  return Exponent{static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y),
                  static_cast<std::uint8_t>(th), static_cast<std::uint8_t>(et), 0, 0};
}

}  // namespace

TEST(PiApply, IdentityAndSimpleIntegrals) {
  std::mt19937_64 rng(1);
  SpaceSignature sig{1, 2, 1, 2};
  FunctionVector f = random_function(rng, sig);
  EXPECT_LT(rel_gap(pi_apply(BlockPiOp::identity(sig), f), f), 1e-15);

  FunctionVector c = FunctionVector::plane(one());
  EXPECT_EQ(pi_apply(BlockPiOp::plane_term(Rel::Lower, Rel::Mult, one()), c)[Space::XY], var(Var::X));
  PolyKernel expect = (one() - var(Var::X)) * (one() - var(Var::Y));
  EXPECT_TRUE(pi_apply(BlockPiOp::plane_term(Rel::Upper, Rel::Upper, one()), c)[Space::XY]
                  .approx_equal(expect, 1e-15));
}

TEST(PiApply, SymbolicMatchesQuadrature) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    SpaceSignature in = random_sig(rng), out = random_sig(rng);
    BlockPiOp op = random_op(rng, out, in);
    FunctionVector f = random_function(rng, in);
    FunctionVector g = pi_apply(op, f);
    SampledFunction fs = [&](Space s, double x, double y) {
      return Eigen::VectorXd(f[s].eval(Point{x, y, 0, 0, 0, 0}));
    };
    for (Space s : kSpaces) {
      if (out.dim(s) == 0) continue;
      for (double x : {0.13, 0.71}) {
        for (double y : {0.37, 0.94}) {
          Eigen::VectorXd num = pi_apply_numeric(op, fs, s, x, y);
          Eigen::VectorXd sym = g[s].eval(Point{x, y, 0, 0, 0, 0});
          EXPECT_LT((num - sym).cwiseAbs().maxCoeff(), 1e-12);
        }
      }
    }
  }
}

TEST(PiCompose, LowerTwiceGivesXMinusTheta) {
  BlockPiOp a = BlockPiOp::plane_term(Rel::Lower, Rel::Mult, one());
  BlockPiOp c = pi_compose(a, a);
  EXPECT_EQ(c.num_terms(), 1u);
  EXPECT_EQ(c.term(Space::XY, Space::XY, Rel::Lower, Rel::Mult), var(Var::X) - var(Var::Theta));
  FunctionVector f = FunctionVector::plane(one());
  EXPECT_EQ(pi_apply(c, f)[Space::XY], PolyKernel::monomial(ex(2), 0.5));
}

TEST(PiCompose, MultipliersComposePointwise) {
  BlockPiOp mx = BlockPiOp::multiplier(var(Var::X));
  BlockPiOp my = BlockPiOp::multiplier(var(Var::Y));
  EXPECT_EQ(pi_compose(mx, my), BlockPiOp::multiplier(PolyKernel::monomial(ex(1, 1))));
}

TEST(PiCompose, IdentityIsNeutral) {
  std::mt19937_64 rng(3);
  SpaceSignature in{1, 1, 2, 1}, out{2, 1, 1, 2};
  BlockPiOp op = random_op(rng, out, in);
  EXPECT_EQ(pi_compose(BlockPiOp::identity(out), op), op);
  EXPECT_EQ(pi_compose(op, BlockPiOp::identity(in)), op);
}

TEST(PiCompose, SignatureMismatchThrows) {
  BlockPiOp a(SpaceSignature::plane(1), SpaceSignature::plane(2));
  BlockPiOp b(SpaceSignature::plane(1), SpaceSignature::plane(1));
  EXPECT_THROW(pi_compose(a, b), SignatureError);
}

TEST(PiCompose, MatchesNestedApplication) {
  std::mt19937_64 rng(4);
  int cases = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SpaceSignature s1 = random_sig(rng, 1), s2 = random_sig(rng, 1), s3 = random_sig(rng, 1);
    BlockPiOp a = random_op(rng, s1, s2), b = random_op(rng, s2, s3);
    BlockPiOp ab = pi_compose(a, b);
    for (int k = 0; k < 20; ++k) {
      FunctionVector f = random_function(rng, s3);
      EXPECT_LT(rel_gap(pi_apply(ab, f), pi_apply(a, pi_apply(b, f))), 1e-10);
      ++cases;
    }
  }
  EXPECT_EQ(cases, 1000);
}

TEST(PiCompose, Associative) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 15; ++trial) {
    SpaceSignature s1 = random_sig(rng, 1), s2 = random_sig(rng, 1), s3 = random_sig(rng, 1),
                   s4 = random_sig(rng, 1);
    BlockPiOp a = random_op(rng, s1, s2, 1), b = random_op(rng, s2, s3, 1), c = random_op(rng, s3, s4, 1);
    EXPECT_LT(rel_gap(pi_compose(pi_compose(a, b), c), pi_compose(a, pi_compose(b, c))), 1e-10);
  }
}

TEST(PiAdjoint, LowerBecomesUpper) {
  BlockPiOp a = BlockPiOp::plane_term(Rel::Lower, Rel::Mult, one());
  BlockPiOp s = pi_adjoint(a);
  EXPECT_EQ(s, BlockPiOp::plane_term(Rel::Upper, Rel::Mult, one()));
  Eigen::MatrixXd k(2, 2);
  k << 1, 2, 3, 4;
  EXPECT_EQ(pi_adjoint(BlockPiOp::multiplier(PolyKernel::monomial(ex(1, 1), k))),
            BlockPiOp::multiplier(PolyKernel::monomial(ex(1, 1), Eigen::MatrixXd(k.transpose()))));
}

TEST(PiAdjoint, InnerProductIdentityAndInvolution) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    SpaceSignature in = random_sig(rng), out = random_sig(rng);
    BlockPiOp op = random_op(rng, out, in);
    BlockPiOp adj = pi_adjoint(op);
    EXPECT_EQ(pi_adjoint(adj), op);
    FunctionVector f = random_function(rng, in), g = random_function(rng, out);
    const double lhs = inner_product(g, pi_apply(op, f));
    const double rhs = inner_product(pi_apply(adj, g), f);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(PiAdd, LinearityAndCancellation) {
  std::mt19937_64 rng(7);
  SpaceSignature in{1, 1, 1, 1}, out{1, 2, 1, 1};
  BlockPiOp a = random_op(rng, out, in), b = random_op(rng, out, in);
  EXPECT_TRUE((a + pi_scale(a, -1.0)).is_zero());
  EXPECT_EQ(a + BlockPiOp::zero(out, in), a);
  FunctionVector f = random_function(rng, in);
  FunctionVector lhs = pi_apply(pi_add(a, b), f);
  FunctionVector fa = pi_apply(a, f), fb = pi_apply(b, f);
  for (Space s : kSpaces) fa[s] += fb[s];
  EXPECT_LT(rel_gap(lhs, fa), 1e-14);
  EXPECT_THROW(a + BlockPiOp(in, in), SignatureError);
}

TEST(AddTerm, RejectsWrongVariablesAndRelations) {
  BlockPiOp op(SpaceSignature::plane(1), SpaceSignature::plane(1));
  EXPECT_THROW(op.add_term(Space::XY, Space::XY, Rel::Mult, Rel::Mult, var(Var::Theta)), StructureError);
  EXPECT_THROW(op.add_term(Space::XY, Space::XY, Rel::Ext, Rel::Mult, one()), StructureError);
  EXPECT_THROW(op.add_term(Space::XY, Space::XY, Rel::Mult, Rel::Mult, PolyKernel(2, 1)), SignatureError);
}

namespace {

// 1D Dirichlet-Neumann factor acting on x: T1 = -theta, T2 = -x.
BlockPiOp dn_x() {
  BlockPiOp t = BlockPiOp::plane_term(Rel::Lower, Rel::Mult, -var(Var::Theta));
  t += BlockPiOp::plane_term(Rel::Upper, Rel::Mult, -var(Var::X));
  return t;
}

BlockPiOp dn_y() {
  BlockPiOp t = BlockPiOp::plane_term(Rel::Mult, Rel::Lower, -var(Var::Eta));
  t += BlockPiOp::plane_term(Rel::Mult, Rel::Upper, -var(Var::Y));
  return t;
}

}  // namespace

TEST(DiffCompose, OneDimensionalFirstDerivative) {
  BlockPiOp d = differentiate(dn_x(), Var::X);
  EXPECT_EQ(d, BlockPiOp::plane_term(Rel::Upper, Rel::Mult, -one()));
}

TEST(DiffCompose, SecondDerivativesRecoverInput) {
  BlockPiOp t = pi_compose(dn_y(), dn_x());
  BlockPiOp r22 = diff_compose(t, 2, 2);
  EXPECT_LT(rel_gap(r22, BlockPiOp::identity(SpaceSignature::plane(1))), 1e-14);
  EXPECT_EQ(diff_compose(t, 0, 0), t);
  FunctionVector f = FunctionVector::plane(one());
  EXPECT_TRUE(pi_apply(r22, f)[Space::XY].approx_equal(one(), 1e-14));
}

TEST(DiffCompose, MatchesSymbolicDerivativeOfApply) {
  std::mt19937_64 rng(8);
  BlockPiOp base = pi_compose(dn_y(), dn_x());
  // Add a smooth Lower/Upper perturbation without multiplier terms.
  for (int trial = 0; trial < 5; ++trial) {
    BlockPiOp t = base;
    for (Rel rx : {Rel::Lower, Rel::Upper}) {
      for (Rel ry : {Rel::Lower, Rel::Upper}) {
        t.add_term(Space::XY, Space::XY, rx, ry,
                   random_poly(rng, {Var::X, Var::Y, Var::Theta, Var::Eta}, 2, 1, 1));
      }
    }
    for (int k = 0; k <= 2; ++k) {
      for (int l = 0; l <= 2; ++l) {
        BlockPiOp r;
        try {
          r = diff_compose(t, k, l);
        } catch (const StructureError&) {
          // Second derivatives of a kernel with a nonzero jump are not PI.
          continue;
        }
        MonomialBasis mons({Var::X, Var::Y}, 4);
        for (const auto& e : mons.exponents()) {
          FunctionVector f = FunctionVector::plane(PolyKernel::monomial(e));
          PolyKernel lhs = pi_apply(t, f)[Space::XY];
          for (int i = 0; i < k; ++i) lhs = lhs.diff(Var::X);
          for (int j = 0; j < l; ++j) lhs = lhs.diff(Var::Y);
          EXPECT_TRUE(lhs.approx_equal(pi_apply(r, f)[Space::XY], 1e-11));
        }
      }
    }
  }
}

TEST(DiffCompose, RejectsMultiplierStructure) {
  EXPECT_THROW(diff_compose(BlockPiOp::identity(SpaceSignature::plane(1)), 1, 0), StructureError);
}

TEST(DiracCompose, EdgeAndCornerTraces) {
  FunctionVector f = FunctionVector::plane(PolyKernel::monomial(ex(1, 2)) + one());
  BlockPiOp r20 = BlockPiOp::plane_term(Rel::Upper, Rel::Mult, one());
  BlockPiOp d0 = dirac_compose(r20, TraceAxis::X, 0);
  EXPECT_EQ(d0.out_sig(), (SpaceSignature{0, 0, 1, 0}));
  EXPECT_EQ(d0.term(Space::Y, Space::XY, Rel::Full, Rel::Mult), one());

  BlockPiOp r10 = BlockPiOp::plane_term(Rel::Lower, Rel::Mult, one());
  EXPECT_EQ(dirac_compose(r10, TraceAxis::X, 1).term(Space::Y, Space::XY, Rel::Full, Rel::Mult), one());
  EXPECT_TRUE(dirac_compose(r10, TraceAxis::X, 0).is_zero());

  BlockPiOp r22 = BlockPiOp::plane_term(Rel::Upper, Rel::Upper, one());
  BlockPiOp h = dirac_compose(r22, TraceAxis::Both, 0, 0);
  EXPECT_EQ(h.term(Space::R, Space::XY, Rel::Full, Rel::Full), one());

  EXPECT_THROW(dirac_compose(BlockPiOp::identity(SpaceSignature::plane(1)), TraceAxis::X, 0),
               StructureError);
}

TEST(DiracCompose, MatchesSubstitutionOfApply) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    BlockPiOp op(SpaceSignature::plane(2), SpaceSignature{1, 1, 1, 1});
    BlockPiOp full = random_op(rng, SpaceSignature::plane(2), SpaceSignature{1, 1, 1, 1}, 2, 0.7);
    // Drop terms whose traces are undefined (multipliers in the traced coordinates).
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : full.block(Space::XY, si)) {
        if (rp.first == Rel::Mult || rp.second == Rel::Mult) continue;
        op.add_term(Space::XY, si, rp.first, rp.second, k);
      }
    }
    FunctionVector f = random_function(rng, op.in_sig());
    PolyKernel g = pi_apply(op, f)[Space::XY];
    for (int k : {0, 1}) {
      for (int l : {0, 1}) {
        PolyKernel gx = g.subs(Var::X, Limit::constant(k));
        EXPECT_TRUE(pi_apply(dirac_compose(op, TraceAxis::X, k), f)[Space::Y].approx_equal(gx, 1e-12));
        PolyKernel gy = g.subs(Var::Y, Limit::constant(l));
        EXPECT_TRUE(pi_apply(dirac_compose(op, TraceAxis::Y, 0, l), f)[Space::X].approx_equal(gy, 1e-12));
        PolyKernel gc = gx.subs(Var::Y, Limit::constant(l));
        EXPECT_TRUE(pi_apply(dirac_compose(op, TraceAxis::Both, k, l), f)[Space::R].approx_equal(gc, 1e-12));
      }
    }
  }
}

TEST(Vstack, StacksRows) {
  BlockPiOp a = BlockPiOp::plane_term(Rel::Lower, Rel::Mult, one());
  BlockPiOp b = BlockPiOp::multiplier(var(Var::Y));
  BlockPiOp s = vstack({a, b});
  EXPECT_EQ(s.out_sig(), SpaceSignature::plane(2));
  FunctionVector f = FunctionVector::plane(one());
  FunctionVector g = pi_apply(s, f);
  EXPECT_EQ(g[Space::XY].block(0, 0, 1, 1), var(Var::X));
  EXPECT_EQ(g[Space::XY].block(1, 0, 1, 1), var(Var::Y));
}
