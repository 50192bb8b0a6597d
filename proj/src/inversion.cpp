#include "pie/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/SVD>

#include "pie/quadrature.hpp"

namespace pie {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr Rel kQuadrants[4][2] = {
    {Rel::Lower, Rel::Lower}, {Rel::Lower, Rel::Upper}, {Rel::Upper, Rel::Lower}, {Rel::Upper, Rel::Upper}};

Point at(double x, double y) {
  Point p{};
  p[static_cast<int>(Var::X)] = x;
  p[static_cast<int>(Var::Y)] = y;
  return p;
}

Exponent xy_exponent(int a, int b) {
  Exponent e{};
  e[static_cast<int>(Var::X)] = static_cast<std::uint8_t>(a);
  e[static_cast<int>(Var::Y)] = static_cast<std::uint8_t>(b);
  return e;
}

const std::array<Var, kNumVars> kToTheta = {Var::Theta, Var::Eta, Var::X, Var::Y, Var::Nu, Var::Mu};

}  // namespace

BlockPiOp SeparableOp::to_pi() const {
  if (R0.rows() != R0.cols() || Z.cols() != n() || H.rows() != Z.rows() || H.cols() != Z.rows()) {
    throw DimensionError("SeparableOp: inconsistent dimensions");
  }
  BlockPiOp op = BlockPiOp::multiplier(R0);
  const PolyKernel k = Z.transpose().right_mul(H) * Z.rename(kToTheta);
  if (!k.is_zero()) {
    for (const auto& q : kQuadrants) op.add_term(Space::XY, Space::XY, q[0], q[1], k);
  }
  return op;
}

SeparableOp separate(const BlockPiOp& op) {
  const int n = op.in_sig().n2;
  if (!(op.in_sig() == SpaceSignature::plane(n)) || !(op.out_sig() == op.in_sig())) {
    throw StructureError("separate: operator must act on L2^n[x,y]");
  }
  const Block& b = op.block(Space::XY, Space::XY);
  for (const auto& [rp, k] : b) {
    const bool mult = rp.first == Rel::Mult && rp.second == Rel::Mult;
    const bool quad = (rp.first == Rel::Lower || rp.first == Rel::Upper) &&
                      (rp.second == Rel::Lower || rp.second == Rel::Upper);
    if (!mult && !quad) throw StructureError("separate: only a multiplier and a full double integral are allowed");
  }
  SeparableOp s;
  s.R0 = op.term(Space::XY, Space::XY, Rel::Mult, Rel::Mult);
  if (s.R0.depends_on(Var::Theta) || s.R0.depends_on(Var::Eta)) {
    throw StructureError("separate: multiplier depends on integration variables");
  }
  const PolyKernel r1 = op.term(Space::XY, Space::XY, Rel::Lower, Rel::Lower);
  const double tol = 1e-12 * (1.0 + r1.max_abs_coeff());
  for (const auto& q : kQuadrants) {
    if (!op.term(Space::XY, Space::XY, q[0], q[1]).approx_equal(r1, tol)) {
      throw StructureError("separate: integral part is not a full double integral");
    }
  }
  // Monomials of either side, as exponents in (x, y).
  std::set<Exponent, GradedLex> mons;
  for (const auto& [e, c] : r1.terms()) {
    mons.insert(xy_exponent(e[static_cast<int>(Var::X)], e[static_cast<int>(Var::Y)]));
    mons.insert(xy_exponent(e[static_cast<int>(Var::Theta)], e[static_cast<int>(Var::Eta)]));
  }
  if (mons.empty()) mons.insert(Exponent{});
  const std::vector<Exponent> basis(mons.begin(), mons.end());
  auto index = [&](const Exponent& e) {
    return static_cast<int>(std::lower_bound(basis.begin(), basis.end(), e, GradedLex{}) - basis.begin());
  };
  const int k = static_cast<int>(basis.size());
  s.Z = PolyKernel(k * n, n);
  for (int a = 0; a < k; ++a) s.Z.set_block(a * n, 0, PolyKernel::monomial(basis[a], MatrixXd::Identity(n, n)));
  s.H = MatrixXd::Zero(k * n, k * n);
  for (const auto& [e, c] : r1.terms()) {
    const int a = index(xy_exponent(e[static_cast<int>(Var::X)], e[static_cast<int>(Var::Y)]));
    const int bb = index(xy_exponent(e[static_cast<int>(Var::Theta)], e[static_cast<int>(Var::Eta)]));
    s.H.block(a * n, bb * n, n, n) += c;
  }
  return s;
}

EvaluableOp::EvaluableOp(int n, MatrixField m, MatrixField l, MatrixXd core, MatrixField r, int order)
    : n_(n), m_(std::move(m)), l_(std::move(l)), core_(std::move(core)), r_(std::move(r)), order_(order) {
  if (core_.rows() != core_.cols()) throw DimensionError("EvaluableOp: core must be square");
  if (order_ < 1) throw std::invalid_argument("EvaluableOp: quadrature order must be positive");
}

EvaluableOp EvaluableOp::from_separable(const SeparableOp& op, int order) {
  const PolyKernel R0 = op.R0;
  const PolyKernel Zt = op.Z.transpose();
  const PolyKernel Z = op.Z;
  return EvaluableOp(
      op.n(), [R0](double x, double y) { return R0.eval(at(x, y)); },
      [Zt](double x, double y) { return Zt.eval(at(x, y)); }, op.H,
      [Z](double x, double y) { return Z.eval(at(x, y)); }, order);
}

VectorXd EvaluableOp::moment(const VectorField& v) const {
  const GaussRule g = gauss_legendre(order_);
  VectorXd acc = VectorXd::Zero(rank());
  if (rank() == 0) return acc;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      const double t = g.nodes[i];
      const double s = g.nodes[j];
      acc += g.weights[i] * g.weights[j] * (r_(t, s) * v(t, s));
    }
  }
  return acc;
}

VectorField EvaluableOp::apply(const VectorField& v) const {
  const VectorXd c = rank() > 0 ? VectorXd(core_ * moment(v)) : VectorXd();
  const MatrixField m = m_;
  const MatrixField l = l_;
  return [m, l, c, v](double x, double y) -> VectorXd {
    VectorXd out = m(x, y) * v(x, y);
    if (c.size() > 0) out += l(x, y) * c;
    return out;
  };
}

MatrixXd inverse_core(const MatrixXd& H, const MatrixXd& K, double singular_tol) {
  const int p = static_cast<int>(H.rows());
  const MatrixXd A = MatrixXd::Identity(p, p) + K * H;
  if (p == 0) return H;
  Eigen::JacobiSVD<MatrixXd> svd(A);
  if (svd.singularValues().minCoeff() <= singular_tol) {
    throw InversionError("inverse: I + K H is singular");
  }
  // -H A^{-1} = -(A^{-T} H^T)^T
  return -MatrixXd(A.transpose().fullPivLu().solve(H.transpose()).transpose());
}

EvaluableOp invert(const EvaluableOp& op, const InverseOptions& opt) {
  const MatrixField M = [op](double x, double y) { return op.multiplier(x, y); };
  auto k_matrix = [&](int order) {
    const GaussRule g = gauss_legendre(order);
    MatrixXd K = MatrixXd::Zero(op.rank(), op.rank());
    double min_det = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      for (std::size_t j = 0; j < g.nodes.size(); ++j) {
        const double t = g.nodes[i];
        const double s = g.nodes[j];
        const auto lu = M(t, s).fullPivLu();
        min_det = std::min(min_det, std::abs(lu.determinant()));
        if (op.rank() > 0) K += g.weights[i] * g.weights[j] * (op.right(t, s) * lu.solve(op.left(t, s)));
      }
    }
    return std::make_pair(K, min_det);
  };
  int order = std::max(1, opt.order);
  auto [K, min_det] = k_matrix(order);
  for (;;) {
    if (min_det <= opt.singular_tol) {
      std::ostringstream os;
      os << "inverse: multiplier is singular on the check grid (min |det| = " << min_det << ")";
      throw InversionError(os.str());
    }
    if (2 * order > opt.max_order) throw InversionError("inverse: quadrature for K did not converge");
    auto [K2, det2] = k_matrix(2 * order);
    const double change = op.rank() > 0 ? (K2 - K).cwiseAbs().maxCoeff() : 0.0;
    const double scale = op.rank() > 0 ? std::max(1.0, K2.cwiseAbs().maxCoeff()) : 1.0;
    K = K2;
    min_det = det2;
    order *= 2;
    if (change <= opt.k_tol * scale) break;
  }
  if (min_det <= opt.singular_tol) throw InversionError("inverse: multiplier is singular on the check grid");
  const MatrixXd core = inverse_core(op.core(), K, opt.singular_tol);
  return EvaluableOp(
      op.n(), [op](double x, double y) { return MatrixXd(op.multiplier(x, y).inverse()); },
      [op](double x, double y) { return MatrixXd(op.multiplier(x, y).fullPivLu().solve(op.left(x, y))); }, core,
      [op](double x, double y) {
        const MatrixXd m = op.multiplier(x, y);
        // R M^{-1} = (M^{-T} R^T)^T
        return MatrixXd(m.transpose().fullPivLu().solve(op.right(x, y).transpose()).transpose());
      },
      order);
}

EvaluableOp invert(const SeparableOp& op, const InverseOptions& opt) {
  return invert(EvaluableOp::from_separable(op, std::max(1, opt.order)), opt);
}

VectorField plane_field(const PolyKernel& f) {
  return [f](double x, double y) -> VectorXd { return f.eval(at(x, y)).col(0); };
}

GainOp::GainOp(EvaluableOp p_inv, BlockPiOp w) : p_inv_(std::move(p_inv)), w_(std::move(w)) {
  if (!(w_.out_sig() == SpaceSignature::plane(p_inv_.n()))) {
    throw SignatureError("GainOp: W must map into the state space of P");
  }
}

VectorField GainOp::apply(const FunctionVector& q) const {
  if (!(q.sig == w_.in_sig())) throw SignatureError("GainOp::apply: input does not match W");
  const FunctionVector wq = pi_apply(w_, q);
  return p_inv_.apply(plane_field(wq[Space::XY]));
}

GainOp reconstruct_gain(const EvaluableOp& p_inv, const BlockPiOp& w) { return GainOp(p_inv, w); }

}  // namespace pie
