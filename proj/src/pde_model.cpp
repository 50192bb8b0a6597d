#include "pie/pde_model.hpp"

#include <Eigen/LU>

namespace pie {

namespace {

std::array<Var, kNumVars> x_to_y_perm() {
  auto p = identity_perm();
  p[static_cast<int>(Var::X)] = Var::Y;
  p[static_cast<int>(Var::Theta)] = Var::Eta;
  return p;
}

std::array<Var, kNumVars> to_integration_vars() {
  auto p = identity_perm();
  p[static_cast<int>(Var::X)] = Var::Theta;
  p[static_cast<int>(Var::Y)] = Var::Eta;
  return p;
}

void require_vars(const PolyKernel& k, std::initializer_list<Var> allowed, const std::string& what) {
  for (Var v : k.var_set()) {
    bool ok = false;
    for (Var a : allowed) ok = ok || a == v;
    if (!ok) throw std::invalid_argument(what + ": depends on variable " + var_name(v));
  }
}

void require_shape(const PolyKernel& k, int r, int c, const std::string& what) {
  if (k.rows() != r || k.cols() != c) {
    throw std::invalid_argument(what + ": expected " + std::to_string(r) + "x" + std::to_string(c) +
                                ", got " + std::to_string(k.rows()) + "x" + std::to_string(k.cols()));
  }
}

BlockPiOp stack_traces(const BlockPiOp& T, const std::vector<std::pair<int, int>>& derivs, TraceAxis axis) {
  std::vector<BlockPiOp> parts;
  for (const auto& [i, j] : derivs) {
    BlockPiOp r = diff_compose(T, i, j);
    if (axis == TraceAxis::Both) {
      for (auto [k, l] : {std::pair{0, 0}, {1, 0}, {0, 1}, {1, 1}}) {
        parts.push_back(dirac_compose(r, TraceAxis::Both, k, l));
      }
    } else {
      for (int e : {0, 1}) parts.push_back(dirac_compose(r, axis, e, e));
    }
  }
  return vstack(parts);
}

PolyKernel pad_columns(const PolyKernel& c, int cols) {
  if (c.cols() == cols) return c;
  PolyKernel out(c.rows(), cols);
  out.set_block(0, 0, c);
  return out;
}

}  // namespace

BoundarySpec BoundarySpec::dirichlet_neumann(int n_u) {
  BoundarySpec bc;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n_u, n_u);
  for (auto& conds : bc.axis) {
    conds[0].terms = {{0, 0, I}};
    conds[1].terms = {{1, 1, I}};
  }
  return bc;
}

int edge_trace_column(EdgeTrace kind, int endpoint, int n_u) {
  return (2 * static_cast<int>(kind) + endpoint) * n_u;
}

PdeSystem PdeSystem::zeros(int n_u, int n_w, int n_z) {
  PdeSystem p;
  p.n_u = n_u;
  p.n_w = n_w;
  p.n_z = n_z;
  for (auto& row : p.A) row.fill(PolyKernel(n_u, n_u));
  for (auto& row : p.C) row.fill(PolyKernel(n_z, n_u));
  p.B = PolyKernel(n_u, n_w);
  p.D = Eigen::MatrixXd::Zero(n_z, n_w);
  p.bc = BoundarySpec::dirichlet_neumann(n_u);
  p.sensing.C1 = Eigen::MatrixXd::Zero(0, 16 * n_u);
  p.sensing.C2 = PolyKernel(0, 12 * n_u);
  p.sensing.C3 = PolyKernel(0, 12 * n_u);
  p.sensing.D1 = Eigen::MatrixXd::Zero(0, n_w);
  p.sensing.D2 = PolyKernel(0, n_w);
  p.sensing.D3 = PolyKernel(0, n_w);
  return p;
}

void PdeSystem::validate() const {
  if (n_u <= 0 || n_w < 0 || n_z < 0) throw std::invalid_argument("PdeSystem: invalid dimensions");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const std::string tag = std::to_string(i) + std::to_string(j);
      require_shape(A[i][j], n_u, n_u, "A_" + tag);
      require_vars(A[i][j], {Var::X, Var::Y}, "A_" + tag);
      require_shape(C[i][j], n_z, n_u, "C_" + tag);
      require_vars(C[i][j], {Var::X, Var::Y}, "C_" + tag);
    }
  }
  require_shape(B, n_u, n_w, "B");
  require_vars(B, {Var::X, Var::Y}, "B");
  if (D.rows() != n_z || D.cols() != n_w) throw std::invalid_argument("D: shape mismatch");
  for (const auto& conds : bc.axis) {
    for (const auto& c : conds) {
      if (c.terms.empty()) throw std::invalid_argument("boundary condition without terms");
      for (const auto& t : c.terms) {
        if ((t.endpoint != 0 && t.endpoint != 1) || (t.order != 0 && t.order != 1)) {
          throw std::invalid_argument("boundary term: endpoint and order must be 0 or 1");
        }
        if (t.coeff.rows() != n_u || t.coeff.cols() != n_u) {
          throw std::invalid_argument("boundary term: coefficient must be n_u x n_u");
        }
      }
    }
  }
  const SensingSpec& s = sensing;
  if (s.C1.rows() != s.nq1 || s.C1.cols() != 16 * n_u) throw std::invalid_argument("C1: expected nq1 x 16 n_u");
  auto edge_ok = [&](const PolyKernel& c, int nq, Var v, const std::string& name) {
    if (c.rows() != nq || (c.cols() != 4 * n_u && c.cols() != 12 * n_u)) {
      throw std::invalid_argument(name + ": expected nq x 4 n_u or nq x 12 n_u");
    }
    require_vars(c, {v}, name);
  };
  edge_ok(s.C2, s.nq2, Var::X, "C2");
  edge_ok(s.C3, s.nq3, Var::Y, "C3");
  if (s.D1.rows() != s.nq1 || s.D1.cols() != n_w) throw std::invalid_argument("D1: expected nq1 x n_w");
  require_shape(s.D2, s.nq2, n_w, "D2");
  require_vars(s.D2, {Var::X}, "D2");
  require_shape(s.D3, s.nq3, n_w, "D3");
  require_vars(s.D3, {Var::Y}, "D3");
}

OneDimFactor build_1d_factor(const std::array<BoundaryCondition, 2>& conds, int n_u, const std::string& axis) {
  // u(s) = int_0^s (s - t) v(t) dt + c1 + c2 s. Each condition gives
  //   Mrow [c1; c2] + int_0^1 G(t) v(t) dt = 0.
  const int n = n_u;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  PolyKernel G(2 * n, n);  // in Theta
  const PolyKernel th = PolyKernel::variable(Var::Theta);
  for (int c = 0; c < 2; ++c) {
    for (const auto& t : conds[c].terms) {
      const double e = t.endpoint;
      if (t.order == 0) {
        M.block(c * n, 0, n, n) += t.coeff;
        M.block(c * n, n, n, n) += e * t.coeff;
        if (t.endpoint == 1) {
          PolyKernel g = (PolyKernel::scalar(1.0) - th) * PolyKernel::constant(t.coeff);
          PolyKernel full(2 * n, n);
          full.set_block(c * n, 0, g);
          G += full;
        }
      } else {
        M.block(c * n, n, n, n) += t.coeff;
        if (t.endpoint == 1) {
          PolyKernel full(2 * n, n);
          full.set_block(c * n, 0, PolyKernel::constant(t.coeff));
          G += full;
        }
      }
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw WellPosednessError("boundary conditions along " + axis +
                             " do not determine the integration constants (singular 2x2 system)");
  }
  const Eigen::MatrixXd Minv = lu.inverse();
  // K(s,t) = -[I, s I] M^{-1} G(t)
  PolyKernel basis(n, 2 * n);
  basis.set_block(0, 0, PolyKernel::identity(n));
  basis.set_block(0, n, PolyKernel::variable(Var::X) * PolyKernel::identity(n));
  const PolyKernel K = -(basis * G.left_mul(Minv));
  OneDimFactor f;
  f.lower = ((PolyKernel::variable(Var::X) - th) * PolyKernel::identity(n) + K).pruned(1e-14);
  f.upper = K.pruned(1e-14);
  return f;
}

BlockPiOp build_T(const BoundarySpec& bc, int n_u) {
  const OneDimFactor fx = build_1d_factor(bc.on(Axis::X), n_u, "x");
  const OneDimFactor fy = build_1d_factor(bc.on(Axis::Y), n_u, "y");
  BlockPiOp tx = BlockPiOp::plane_term(Rel::Lower, Rel::Mult, fx.lower);
  tx += BlockPiOp::plane_term(Rel::Upper, Rel::Mult, fx.upper);
  const auto p = x_to_y_perm();
  BlockPiOp ty = BlockPiOp::plane_term(Rel::Mult, Rel::Lower, fy.lower.rename(p));
  ty += BlockPiOp::plane_term(Rel::Mult, Rel::Upper, fy.upper.rename(p));
  return pi_compose(ty, tx);
}

BlockPiOp corner_traces(const BlockPiOp& T) {
  return stack_traces(T, {{0, 0}, {1, 0}, {0, 1}, {1, 1}}, TraceAxis::Both);
}

BlockPiOp y_edge_traces(const BlockPiOp& T) {
  return stack_traces(T, {{2, 0}, {2, 1}, {0, 0}, {1, 0}, {0, 1}, {1, 1}}, TraceAxis::Y);
}

BlockPiOp x_edge_traces(const BlockPiOp& T) {
  return stack_traces(T, {{0, 2}, {1, 2}, {0, 0}, {0, 1}, {1, 0}, {1, 1}}, TraceAxis::X);
}

BlockPiOp line_multiplier(Space s, const PolyKernel& k) {
  if (s != Space::X && s != Space::Y) throw std::invalid_argument("line_multiplier: space must be X or Y");
  BlockPiOp op(SpaceSignature{0, s == Space::X ? k.rows() : 0, s == Space::Y ? k.rows() : 0, 0},
               SpaceSignature{0, s == Space::X ? k.cols() : 0, s == Space::Y ? k.cols() : 0, 0});
  if (s == Space::X) {
    op.add_term(s, s, Rel::Mult, Rel::None, k);
  } else {
    op.add_term(s, s, Rel::None, Rel::Mult, k);
  }
  return op;
}

BlockPiOp plane_integral(const PolyKernel& k_xy) {
  BlockPiOp op(SpaceSignature::real(k_xy.rows()), SpaceSignature::plane(k_xy.cols()));
  op.add_term(Space::R, Space::XY, Rel::Full, Rel::Full, k_xy.rename(to_integration_vars()));
  return op;
}

BlockPiOp plane_extension(const PolyKernel& k_xy) {
  BlockPiOp op(SpaceSignature::plane(k_xy.rows()), SpaceSignature::real(k_xy.cols()));
  op.add_term(Space::XY, Space::R, Rel::Ext, Rel::Ext, k_xy);
  return op;
}

PieSystem build_pie(const PdeSystem& pde) {
  pde.validate();
  const int n = pde.n_u;
  PieSystem pie;
  pie.T = build_T(pde.bc, n);

  std::array<std::array<BlockPiOp, 3>, 3> R;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) R[i][j] = diff_compose(pie.T, i, j);
  }

  pie.A = BlockPiOp(SpaceSignature::plane(n), SpaceSignature::plane(n));
  pie.C = BlockPiOp(SpaceSignature::real(pde.n_z), SpaceSignature::plane(n));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (!pde.A[i][j].is_zero()) pie.A += pi_compose(BlockPiOp::multiplier(pde.A[i][j]), R[i][j]);
      if (!pde.C[i][j].is_zero()) pie.C += pi_compose(plane_integral(pde.C[i][j]), R[i][j]);
      if (!pde.A[i][j].is_zero() || !pde.C[i][j].is_zero()) pie.state_orders.push_back({i, j});
    }
  }
  pie.B = plane_extension(pde.B);
  pie.D = BlockPiOp(SpaceSignature::real(pde.n_z), SpaceSignature::real(pde.n_w));
  if (pde.n_z > 0 && pde.n_w > 0) {
    pie.D.add_term(Space::R, Space::R, Rel::None, Rel::None, PolyKernel::constant(pde.D));
  }

  const SensingSpec& s = pde.sensing;
  const SpaceSignature qsig = s.signature();
  const SpaceSignature in2 = SpaceSignature::plane(n);
  pie.Cq = BlockPiOp(qsig, in2);
  if (s.nq1 > 0) {
    BlockPiOp part = corner_traces(pie.T).left_mul(Space::R, s.C1);
    pie.Cq += embed(part, qsig, {0, 0, 0, 0}, in2, {0, 0, 0, 0});
  }
  if (s.nq2 > 0) {
    BlockPiOp part = pi_compose(line_multiplier(Space::X, pad_columns(s.C2, 12 * n)), y_edge_traces(pie.T));
    pie.Cq += embed(part, qsig, {0, 0, 0, 0}, in2, {0, 0, 0, 0});
  }
  if (s.nq3 > 0) {
    BlockPiOp part = pi_compose(line_multiplier(Space::Y, pad_columns(s.C3, 12 * n)), x_edge_traces(pie.T));
    pie.Cq += embed(part, qsig, {0, 0, 0, 0}, in2, {0, 0, 0, 0});
  }

  pie.Dq = BlockPiOp(qsig, SpaceSignature::real(pde.n_w));
  if (pde.n_w > 0) {
    if (s.nq1 > 0) pie.Dq.add_term(Space::R, Space::R, Rel::None, Rel::None, PolyKernel::constant(s.D1));
    if (s.nq2 > 0) pie.Dq.add_term(Space::X, Space::R, Rel::Ext, Rel::None, s.D2);
    if (s.nq3 > 0) pie.Dq.add_term(Space::Y, Space::R, Rel::None, Rel::Ext, s.D3);
  }
  return pie;
}

PdeSystem heat_estimation_example(double r) {
  PdeSystem p = PdeSystem::zeros(1, 1, 1);
  p.A[0][0] = PolyKernel::scalar(r);
  p.A[2][0] = PolyKernel::scalar(1.0);
  p.A[0][2] = PolyKernel::scalar(1.0);
  p.B = PolyKernel::scalar(1.0);
  p.C[0][0] = PolyKernel::scalar(1.0);
  SensingSpec& s = p.sensing;
  s.nq2 = 1;
  s.nq3 = 1;
  Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(1, 12);
  sel(0, edge_trace_column(EdgeTrace::Value, 1, 1)) = 1.0;
  s.C2 = PolyKernel::constant(sel);
  s.C3 = PolyKernel::constant(sel);
  s.D2 = PolyKernel(1, 1);
  s.D3 = PolyKernel(1, 1);
  return p;
}

bool check_state_membership(const PolyKernel& u, const BoundarySpec& bc, double tol) {
  for (int a = 0; a < 2; ++a) {
    const Var v = a == 0 ? Var::X : Var::Y;
    for (const auto& cond : bc.axis[a]) {
      PolyKernel res(cond.terms.empty() ? u.rows() : static_cast<int>(cond.terms.front().coeff.rows()), u.cols());
      for (const auto& t : cond.terms) {
        PolyKernel d = t.order == 1 ? u.diff(v) : u;
        res += d.subs(v, Limit::constant(t.endpoint)).left_mul(t.coeff);
      }
      if (res.max_abs_coeff() > tol) return false;
    }
  }
  return true;
}

}  // namespace pie
