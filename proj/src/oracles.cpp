#include "pie/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "pie/inversion.hpp"
#include "pie/quadrature.hpp"
#include "pie/random_ops.hpp"

namespace pie {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::random_function;
using testing::random_op;
using testing::random_poly;
using testing::random_sig;
using testing::rel_gap;

namespace {

PolyKernel var(Var v) { return PolyKernel::variable(v); }

PolyKernel dxxyy(const PolyKernel& u) { return u.diff(Var::X).diff(Var::X).diff(Var::Y).diff(Var::Y); }

double kernel_gap(const PolyKernel& a, const PolyKernel& b) {
  return (a - b).max_abs_coeff() / std::max({1.0, a.max_abs_coeff(), b.max_abs_coeff()});
}

// T for u(0) = u'(1) = 0 in both coordinates.
BlockPiOp dirichlet_neumann_T() {
  BlockPiOp tx = BlockPiOp::plane_term(Rel::Lower, Rel::Mult, -var(Var::Theta));
  tx += BlockPiOp::plane_term(Rel::Upper, Rel::Mult, -var(Var::X));
  BlockPiOp ty = BlockPiOp::plane_term(Rel::Mult, Rel::Lower, -var(Var::Eta));
  ty += BlockPiOp::plane_term(Rel::Mult, Rel::Upper, -var(Var::Y));
  return pi_compose(ty, tx);
}

SeparableOp random_separable(std::mt19937_64& rng, int n, int p) {
  std::normal_distribution<double> g;
  SeparableOp s;
  const PolyKernel S = random_poly(rng, {Var::X, Var::Y}, 1, n, n, 1.0) * 0.5;
  s.R0 = PolyKernel::identity(n) + S.transpose() * S;
  s.Z = random_poly(rng, {Var::X, Var::Y}, 2, p, n, 1.0);
  s.H = MatrixXd::NullaryExpr(p, p, [&]() { return 0.3 * g(rng); });
  return s;
}

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

double field_gap(const VectorField& a, const VectorField& b) {
  return l2_norm([&](double x, double y) -> VectorXd { return a(x, y) - b(x, y); }) / l2_norm(b);
}

}  // namespace

OracleResult check_compose(std::uint64_t seed, int pairs, int inputs) {
  OracleResult r{"compose", 0, 0.0, 1e-10, ""};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < pairs; ++t) {
    const SpaceSignature s1 = random_sig(rng, 1), s2 = random_sig(rng, 1), s3 = random_sig(rng, 1);
    const BlockPiOp a = random_op(rng, s1, s2), b = random_op(rng, s2, s3);
    const BlockPiOp ab = pi_compose(a, b);
    for (int k = 0; k < inputs; ++k) {
      const FunctionVector f = random_function(rng, s3);
      r.max_residual = std::max(r.max_residual, rel_gap(pi_apply(ab, f), pi_apply(a, pi_apply(b, f))));
    }
    ++r.cases;
  }
  return r;
}

OracleResult check_associativity(std::uint64_t seed, int triples) {
  OracleResult r{"associativity", 0, 0.0, 1e-10, ""};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < triples; ++t) {
    const SpaceSignature s1 = random_sig(rng, 1), s2 = random_sig(rng, 1), s3 = random_sig(rng, 1),
                         s4 = random_sig(rng, 1);
    const BlockPiOp a = random_op(rng, s1, s2, 1), b = random_op(rng, s2, s3, 1), c = random_op(rng, s3, s4, 1);
    r.max_residual = std::max(r.max_residual, rel_gap(pi_compose(pi_compose(a, b), c), pi_compose(a, pi_compose(b, c))));
    ++r.cases;
  }
  return r;
}

OracleResult check_adjoint(std::uint64_t seed, int cases) {
  OracleResult r{"adjoint", 0, 0.0, 1e-10, ""};
  std::mt19937_64 rng(seed);
  for (int t = 0; t < cases; ++t) {
    const SpaceSignature in = random_sig(rng), out = random_sig(rng);
    const BlockPiOp op = random_op(rng, out, in);
    const BlockPiOp adj = pi_adjoint(op);
    r.max_residual = std::max(r.max_residual, rel_gap(pi_adjoint(adj), op));
    const FunctionVector f = random_function(rng, in), g = random_function(rng, out);
    const double lhs = inner_product(g, pi_apply(op, f));
    const double rhs = inner_product(pi_apply(adj, g), f);
    r.max_residual = std::max(r.max_residual, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    ++r.cases;
  }
  return r;
}

OracleResult check_derivative(std::uint64_t seed, int cases) {
  OracleResult r{"derivative", 0, 0.0, 1e-10, ""};
  std::mt19937_64 rng(seed);
  const BlockPiOp base = dirichlet_neumann_T();
  const MonomialBasis mons({Var::X, Var::Y}, 4);
  for (int t = 0; t < cases; ++t) {
    BlockPiOp T = base;
    for (Rel rx : {Rel::Lower, Rel::Upper}) {
      for (Rel ry : {Rel::Lower, Rel::Upper}) {
        T.add_term(Space::XY, Space::XY, rx, ry, random_poly(rng, {Var::X, Var::Y, Var::Theta, Var::Eta}, 2, 1, 1));
      }
    }
    for (int k = 0; k <= 2; ++k) {
      for (int l = 0; l <= 2; ++l) {
        BlockPiOp d;
        try {
          d = diff_compose(T, k, l);
        } catch (const StructureError&) {
          // Second derivatives across a kernel jump leave the PI class.
          continue;
        }
        for (const auto& e : mons.exponents()) {
          const FunctionVector f = FunctionVector::plane(PolyKernel::monomial(e));
          PolyKernel lhs = pi_apply(T, f)[Space::XY];
          for (int i = 0; i < k; ++i) lhs = lhs.diff(Var::X);
          for (int j = 0; j < l; ++j) lhs = lhs.diff(Var::Y);
          r.max_residual = std::max(r.max_residual, kernel_gap(lhs, pi_apply(d, f)[Space::XY]));
        }
      }
    }
    ++r.cases;
  }
  return r;
}

OracleResult check_dirac(std::uint64_t seed, int cases) {
  OracleResult r{"dirac", 0, 0.0, 1e-10, ""};
  std::mt19937_64 rng(seed);
  const SpaceSignature in{1, 1, 1, 1};
  for (int t = 0; t < cases; ++t) {
    const BlockPiOp full = random_op(rng, SpaceSignature::plane(2), in, 2, 0.7);
    BlockPiOp op(SpaceSignature::plane(2), in);
    // Traces of multipliers in the traced coordinate are undefined.
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : full.block(Space::XY, si)) {
        if (rp.first == Rel::Mult || rp.second == Rel::Mult) continue;
        op.add_term(Space::XY, si, rp.first, rp.second, k);
      }
    }
    const FunctionVector f = random_function(rng, in);
    const PolyKernel g = pi_apply(op, f)[Space::XY];
    for (int k : {0, 1}) {
      for (int l : {0, 1}) {
        const PolyKernel gx = g.subs(Var::X, Limit::constant(k));
        const PolyKernel gy = g.subs(Var::Y, Limit::constant(l));
        const PolyKernel gc = gx.subs(Var::Y, Limit::constant(l));
        r.max_residual = std::max({r.max_residual,
                                   kernel_gap(pi_apply(dirac_compose(op, TraceAxis::X, k), f)[Space::Y], gx),
                                   kernel_gap(pi_apply(dirac_compose(op, TraceAxis::Y, 0, l), f)[Space::X], gy),
                                   kernel_gap(pi_apply(dirac_compose(op, TraceAxis::Both, k, l), f)[Space::R], gc)});
      }
    }
    ++r.cases;
  }
  return r;
}

PolyKernel project_to_bc(PolyKernel u, const BoundarySpec& bc) {
  if (u.rows() != 1 || u.cols() != 1) throw std::invalid_argument("project_to_bc: scalar states only");
  for (int a = 0; a < 2; ++a) {
    const Var v = a == 0 ? Var::X : Var::Y;
    Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
    std::array<PolyKernel, 2> r{PolyKernel(1, 1), PolyKernel(1, 1)};
    for (int c = 0; c < 2; ++c) {
      for (const auto& t : bc.axis[a][c].terms) {
        const double al = t.coeff(0, 0);
        if (t.order == 0) {
          M(c, 0) += al;
          M(c, 1) += al * t.endpoint;
        } else {
          M(c, 1) += al;
        }
        const PolyKernel d = t.order == 1 ? u.diff(v) : u;
        r[c] += d.subs(v, Limit::constant(t.endpoint)) * al;
      }
    }
    const Eigen::Matrix2d Mi = M.inverse();
    const PolyKernel c1 = (r[0] * Mi(0, 0) + r[1] * Mi(0, 1)) * -1.0;
    const PolyKernel c2 = (r[0] * Mi(1, 0) + r[1] * Mi(1, 1)) * -1.0;
    u += c1 + c2 * var(v);
  }
  return u;
}

OracleResult check_fundamental_identities(const BoundarySpec& bc, std::uint64_t seed, int cases) {
  OracleResult r{"fundamental_identities", 0, 0.0, 1e-9, ""};
  const BlockPiOp T = build_T(bc, 1);
  std::mt19937_64 rng(seed);
  for (int k = 0; k < cases; ++k) {
    const PolyKernel v = random_poly(rng, {Var::X, Var::Y}, 5, 1, 1, 0.7);
    const PolyKernel tv = pi_apply(T, FunctionVector::plane(v))[Space::XY];
    r.max_residual = std::max(r.max_residual, kernel_gap(dxxyy(tv), v));
    const PolyKernel u = project_to_bc(random_poly(rng, {Var::X, Var::Y}, 5, 1, 1, 0.7), bc);
    const PolyKernel back = pi_apply(T, FunctionVector::plane(dxxyy(u)))[Space::XY];
    r.max_residual = std::max(r.max_residual, kernel_gap(back, u));
    ++r.cases;
  }
  return r;
}

OracleResult check_t_inverts_derivative(const BlockPiOp& T, std::uint64_t seed, int cases) {
  OracleResult r{"t_inverts_derivative", 0, 0.0, 1e-9, ""};
  const int n = T.in_sig().n2;
  if (!(T.in_sig() == SpaceSignature::plane(n)) || !(T.out_sig() == T.in_sig())) {
    r.note = "T does not act on L2[x,y]";
    r.max_residual = std::numeric_limits<double>::infinity();
    return r;
  }
  std::mt19937_64 rng(seed);
  for (int k = 0; k < cases; ++k) {
    const PolyKernel v = random_poly(rng, {Var::X, Var::Y}, 5, n, 1, 0.7);
    const PolyKernel tv = pi_apply(T, FunctionVector::plane(v))[Space::XY];
    r.max_residual = std::max(r.max_residual, kernel_gap(dxxyy(tv), v));
    ++r.cases;
  }
  return r;
}

OracleResult check_inversion(std::uint64_t seed, int cases) {
  OracleResult r{"inversion", 0, 0.0, 1e-8, ""};
  // R0 = 2, H = 1: K = 1/2, core -2/3 and integral kernel -1/6.
  SeparableOp hand;
  hand.R0 = PolyKernel::scalar(2.0);
  hand.Z = PolyKernel::scalar(1.0);
  hand.H = MatrixXd::Constant(1, 1, 1.0);
  const EvaluableOp hq = invert(hand);
  const double q1 = hq.left(0.3, 0.7)(0, 0) * hq.core()(0, 0) * hq.right(0.6, 0.2)(0, 0);
  r.max_residual = std::max(std::abs(hq.core()(0, 0) + 2.0 / 3.0), std::abs(q1 + 1.0 / 6.0));
  std::mt19937_64 rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = 1 + t % 2;
    const SeparableOp s = t == 0 ? hand : random_separable(rng, n, 2 + t % 3);
    const EvaluableOp q = invert(s);
    const EvaluableOp fwd = EvaluableOp::from_separable(s, q.order());
    for (int k = 0; k < 10; ++k) {
      const PolyKernel vp = random_poly(rng, {Var::X, Var::Y}, 3, s.n(), 1, 1.0);
      const VectorField v = plane_field(vp);
      const VectorField rv = plane_field(pi_apply(s.to_pi(), FunctionVector::plane(vp))[Space::XY]);
      r.max_residual = std::max({r.max_residual, field_gap(q.apply(rv), v), field_gap(fwd.apply(q.apply(v)), v)});
    }
    ++r.cases;
  }
  return r;
}

std::vector<OracleResult> run_operator_oracles(std::uint64_t seed) {
  return {check_compose(seed),
          check_associativity(seed + 1),
          check_adjoint(seed + 2),
          check_derivative(seed + 3),
          check_dirac(seed + 4),
          check_fundamental_identities(BoundarySpec::dirichlet_neumann(1), seed + 5),
          check_inversion(seed + 6)};
}

}  // namespace pie
