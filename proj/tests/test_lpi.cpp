#include <gtest/gtest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "pie/lpi.hpp"

using namespace pie;

namespace {

CoordFactor random_factor(std::mt19937_64& rng, bool allow_full) {
  std::uniform_int_distribution<int> pw(0, 2);
  const int nm = allow_full ? 4 : 3;
  const Mode m = static_cast<Mode>(std::uniform_int_distribution<int>(0, nm - 1)(rng));
  CoordFactor f{m, 0, 0};
  if (m != Mode::Full) f.out_pow = pw(rng);
  if (m != Mode::Mult) f.in_pow = pw(rng);
  return f;
}

GramRow random_row(std::mt19937_64& rng, const SpaceSignature& sig) {
  GramRow r;
  std::bernoulli_distribution coin(0.5);
  if (sig.n0 > 0 && std::bernoulli_distribution(0.2)(rng)) {
    r.real_input = true;
    r.comp = std::uniform_int_distribution<int>(0, sig.n0 - 1)(rng);
    return r;
  }
  r.comp = std::uniform_int_distribution<int>(0, sig.n2 - 1)(rng);
  if (std::bernoulli_distribution(0.25)(rng)) {
    r.x = {Mode::Full, 0, std::uniform_int_distribution<int>(0, 2)(rng)};
    r.y = {Mode::Full, 0, std::uniform_int_distribution<int>(0, 2)(rng)};
  } else if (std::bernoulli_distribution(0.2)(rng)) {
    // Integrated out along one coordinate only.
    const CoordFactor f{Mode::Full, 0, std::uniform_int_distribution<int>(0, 2)(rng)};
    if (coin(rng)) {
      r.x = f;
      r.y = random_factor(rng, false);
    } else {
      r.x = random_factor(rng, false);
      r.y = f;
    }
  } else {
    r.x = random_factor(rng, false);
    r.y = random_factor(rng, false);
  }
  return r;
}

// x' = a x + b w (w constant in space), z = int x.
PieSystem scalar_plant(double a, double b, bool with_input) {
  PieSystem p;
  const SpaceSignature plane = SpaceSignature::plane(1);
  const SpaceSignature win = SpaceSignature::real(with_input ? 1 : 0);
  p.T = BlockPiOp::identity(plane);
  p.A = BlockPiOp::identity(plane) * a;
  p.B = with_input ? plane_extension(PolyKernel::scalar(b)) : BlockPiOp::zero(plane, win);
  p.C = plane_integral(PolyKernel::scalar(1.0));
  p.D = BlockPiOp::zero(SpaceSignature::real(1), win);
  p.Cq = BlockPiOp::zero(SpaceSignature::real(0), plane);
  p.Dq = BlockPiOp::zero(SpaceSignature::real(0), win);
  return p;
}

double min_eig(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
}

}  // namespace

TEST(GramBasis, ClosedFormPairsMatchOperatorAlgebra) {
  std::mt19937_64 rng(41);
  const SpaceSignature sig{2, 0, 0, 2};
  for (int trial = 0; trial < 400; ++trial) {
    GramBasis z(sig);
    z.add_row(random_row(rng, sig));
    z.add_row(random_row(rng, sig));
    const BlockPiOp fast = z.pair_op(0, 1);
    const BlockPiOp ref = z.pair_op_reference(0, 1);
    ASSERT_TRUE(fast.approx_equal(ref, 1e-12)) << "trial " << trial << "\nfast:\n"
                                                << fast.describe() << "\nref:\n"
                                                << ref.describe();
  }
}

TEST(GramBasis, WeightedPairsMatchOperatorAlgebra) {
  std::mt19937_64 rng(45);
  const SpaceSignature sig{1, 0, 0, 2};
  for (DomainWeight w : {DomainWeight::X, DomainWeight::Y}) {
    for (int trial = 0; trial < 200; ++trial) {
      GramBasis z(sig, w);
      z.add_row(random_row(rng, sig));
      z.add_row(random_row(rng, sig));
      ASSERT_TRUE(z.pair_op(0, 1).approx_equal(z.pair_op_reference(0, 1), 1e-12)) << "trial " << trial;
    }
  }
}

TEST(GramBasis, WeightOnRealRowsIsItsIntegral) {
  GramBasis z(SpaceSignature{1, 0, 0, 0}, DomainWeight::X);
  GramRow r;
  r.real_input = true;
  z.add_row(r);
  // int_0^1 x (1 - x) dx = 1/6.
  const BlockPiOp op = z.pair_op(0, 0);
  const Block& rr = op.block(Space::R, Space::R);
  ASSERT_EQ(rr.size(), 1u);
  EXPECT_NEAR(rr.begin()->second.terms().begin()->second(0, 0), 1.0 / 6.0, 1e-15);
}

TEST(GramBasis, PairsAreAdjointsOfEachOther) {
  std::mt19937_64 rng(42);
  const SpaceSignature sig{1, 0, 0, 1};
  for (int trial = 0; trial < 100; ++trial) {
    GramBasis z(sig);
    z.add_row(random_row(rng, sig));
    z.add_row(random_row(rng, sig));
    EXPECT_TRUE(pi_adjoint(z.pair_op(0, 1)).approx_equal(z.pair_op(1, 0), 1e-12));
  }
}

TEST(GramBasis, RejectsMalformedRows) {
  GramBasis z(SpaceSignature{1, 0, 0, 1});
  GramRow bad;
  bad.comp = 0;
  bad.x = {Mode::Full, 1, 0};
  bad.y = {Mode::Mult, 1, 0};
  EXPECT_THROW(z.add_row(bad), std::invalid_argument);
  bad.y = {Mode::Mult, 0, 1};
  bad.x = {Mode::Mult, 0, 0};
  EXPECT_THROW(z.add_row(bad), std::invalid_argument);
  GramRow real;
  real.real_input = true;
  real.comp = 1;
  EXPECT_THROW(z.add_row(real), std::invalid_argument);
  GramRow pre;
  pre.pre = 0;
  EXPECT_THROW(z.add_row(pre), std::invalid_argument);
}

TEST(GramBasis, GramOperatorIsPositiveForPsdGram) {
  // <v, Z^* M[G] Z v> = |G^(1/2) Z v|^2 >= 0 on random polynomial inputs.
  std::mt19937_64 rng(43);
  std::normal_distribution<double> g;
  const SpaceSignature sig{1, 0, 0, 1};
  KernelStructure ks;
  ks.mult_mult = ks.int_int = ks.real_plane = true;
  GramBasis z = structured_basis(sig, ks, 1);
  const int n = z.size();
  Eigen::MatrixXd R(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) R(i, j) = g(rng);
  }
  const Eigen::MatrixXd G = R * R.transpose();
  const BlockPiOp op = z.gram_op(G);
  EXPECT_TRUE(pi_adjoint(op).approx_equal(op, 1e-9));
  const MonomialBasis mb({Var::X, Var::Y}, 3);
  for (int trial = 0; trial < 20; ++trial) {
    FunctionVector v(sig);
    PolyKernel f(1, 1);
    for (const Exponent& e : mb.exponents()) f.add_term(e, Eigen::MatrixXd::Constant(1, 1, g(rng)));
    v[Space::XY] = f;
    v[Space::R] = PolyKernel::scalar(g(rng));
    EXPECT_GE(inner_product(v, pi_apply(op, v)), -1e-9);
  }
}

TEST(Lpi, CanonicalCoefficientsDetermineSelfAdjointOperator) {
  // Two self-adjoint operators with equal canonical coefficients are equal.
  std::mt19937_64 rng(44);
  std::normal_distribution<double> g;
  const SpaceSignature sig{1, 0, 0, 1};
  KernelStructure ks;
  ks.mult_mult = ks.mult_int = ks.int_mult = ks.int_int = ks.real_plane = true;
  GramBasis z = structured_basis(sig, ks, 1);
  const int n = z.size();
  Eigen::MatrixXd R = Eigen::MatrixXd::NullaryExpr(n, n, [&]() { return g(rng); });
  const BlockPiOp a = z.gram_op(R + R.transpose());
  const auto ca = canonical_coefficients(a);
  const auto cb = canonical_coefficients(pi_adjoint(a));
  ASSERT_EQ(ca.size(), cb.size());
  for (const auto& [k, v] : ca) EXPECT_NEAR(cb.at(k), v, 1e-10);
  EXPECT_FALSE(canonical_coefficients(a * 1.001).empty());
}

TEST(Lpi, ScalarPlantHasUnitGain) {
  // The spatial mean obeys m' = -m + w, z = m, whose H-infinity norm is 1.
  LpiOptions opt;
  opt.d1 = 0;
  opt.d2 = 1;
  const LpiProblem prob = assemble_gain_analysis_lmi(scalar_plant(-1.0, 1.0, true), opt);
  const SdpSolution raw = solve_sdp(prob.sdp);
  ASSERT_EQ(raw.status, SdpStatus::Optimal) << raw.message;
  const LpiSolution sol = extract_solution(prob, raw);
  EXPECT_NEAR(sol.gamma, 1.0, 0.05);
  EXPECT_GE(sol.gamma, 1.0 - 1e-6);
  EXPECT_GE(min_eig(sol.P_gram), -1e-8);
  ASSERT_EQ(sol.Q_gram.size(), 1u);
  EXPECT_LE(-min_eig(-sol.Q_gram[0]), 1e-8);
  EXPECT_LT(matching_residual(prob, sol).max_abs_coeff(), 1e-8);
}

TEST(Lpi, GainScalesWithInput) {
  LpiOptions opt;
  opt.d1 = 0;
  opt.d2 = 1;
  const LpiProblem prob = assemble_gain_analysis_lmi(scalar_plant(-2.0, 3.0, true), opt);
  const SdpSolution raw = solve_sdp(prob.sdp);
  ASSERT_EQ(raw.status, SdpStatus::Optimal) << raw.message;
  EXPECT_NEAR(extract_solution(prob, raw).gamma, 1.5, 0.075);
}

TEST(Lpi, UnstablePlantIsInfeasible) {
  LpiOptions opt;
  opt.d1 = 0;
  opt.d2 = 1;
  opt.gamma = 100.0;
  const LpiProblem prob = assemble_gain_analysis_lmi(scalar_plant(1.0, 1.0, true), opt);
  const SdpSolution raw = solve_sdp(prob.sdp);
  EXPECT_EQ(raw.status, SdpStatus::PrimalInfeasible) << raw.message;
  EXPECT_THROW(extract_solution(prob, raw), ExtractionError);
}

TEST(Lpi, NoDisturbanceChannel) {
  // Without w any positive bound is certified by scaling P up.
  LpiOptions opt;
  opt.d1 = 0;
  opt.d2 = 1;
  opt.gamma = 0.05;
  const LpiProblem prob = assemble_gain_analysis_lmi(scalar_plant(-1.0, 1.0, false), opt);
  EXPECT_EQ(prob.sdp.num_free, 0);
  const SdpSolution raw = solve_sdp(prob.sdp);
  ASSERT_EQ(raw.status, SdpStatus::Optimal) << raw.message;
  const LpiSolution sol = extract_solution(prob, raw);
  EXPECT_DOUBLE_EQ(sol.gamma, 0.05);
  EXPECT_LT(matching_residual(prob, sol).max_abs_coeff(), 1e-7);
}

TEST(Lpi, RejectsBadOptions) {
  LpiOptions opt;
  opt.eps = 0.0;
  EXPECT_THROW(assemble_gain_analysis_lmi(scalar_plant(-1.0, 1.0, true), opt), std::invalid_argument);
  opt.eps = 1e-3;
  opt.d2 = -1;
  EXPECT_THROW(assemble_gain_analysis_lmi(scalar_plant(-1.0, 1.0, true), opt), std::invalid_argument);
}

TEST(Lpi, UpperIndexEnumeratesTriangle) {
  const int n = 5;
  std::vector<int> seen;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      seen.push_back(upper_index(n, i, j));
      EXPECT_EQ(upper_index(n, j, i), upper_index(n, i, j));
    }
  }
  for (std::size_t k = 0; k < seen.size(); ++k) EXPECT_EQ(seen[k], static_cast<int>(k));
}
