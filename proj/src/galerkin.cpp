#include "pie/galerkin.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "pie/quadrature.hpp"

namespace pie {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Point at(double x, double y) {
  Point p{};
  p[static_cast<int>(Var::X)] = x;
  p[static_cast<int>(Var::Y)] = y;
  return p;
}

FunctionVector real_unit(int n, int k) {
  FunctionVector f(SpaceSignature::real(n));
  MatrixXd e = MatrixXd::Zero(n, 1);
  e(k, 0) = 1.0;
  f[Space::R] = PolyKernel::constant(e);
  return f;
}

/// Constant unit functions, one per component of every space of sig.
std::vector<FunctionVector> unit_inputs(const SpaceSignature& sig) {
  std::vector<FunctionVector> out;
  for (Space s : kSpaces) {
    for (int k = 0; k < sig.dim(s); ++k) {
      FunctionVector f(sig);
      MatrixXd e = MatrixXd::Zero(sig.dim(s), 1);
      e(k, 0) = 1.0;
      f[s] = PolyKernel::constant(e);
      out.push_back(f);
    }
  }
  return out;
}

/// Values of every basis function at the nodes of a tensor rule: one n_u x N
/// matrix per node, with the product weight.
struct SampledBasis {
  std::vector<MatrixXd> values;
  std::vector<double> weights;
  std::vector<std::array<double, 2>> nodes;
};

SampledBasis sample_basis(const std::vector<PolyKernel>& phi, int n_u, int order) {
  const GaussRule g = gauss_legendre(order);
  SampledBasis s;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      MatrixXd v(n_u, static_cast<Eigen::Index>(phi.size()));
      for (std::size_t k = 0; k < phi.size(); ++k) v.col(static_cast<Eigen::Index>(k)) = phi[k].eval(at(g.nodes[i], g.nodes[j])).col(0);
      s.values.push_back(std::move(v));
      s.weights.push_back(g.weights[i] * g.weights[j]);
      s.nodes.push_back({g.nodes[i], g.nodes[j]});
    }
  }
  return s;
}

/// <phi_i, L q_k> for each input q_k, with the quadrature order doubled until
/// two successive orders agree.
MatrixXd gain_columns(const GainOp& gain, const std::vector<FunctionVector>& q, const std::vector<PolyKernel>& phi,
                      int n_u, int degree, const AssemblyOptions& opt) {
  const int n = static_cast<int>(phi.size());
  MatrixXd out = MatrixXd::Zero(n, static_cast<Eigen::Index>(q.size()));
  if (q.empty()) return out;
  std::vector<VectorField> fields;
  fields.reserve(q.size());
  for (const auto& qk : q) fields.push_back(gain.apply(qk));
  auto integrate = [&](int order) {
    const SampledBasis s = sample_basis(phi, n_u, order);
    MatrixXd r = MatrixXd::Zero(n, static_cast<Eigen::Index>(q.size()));
    for (std::size_t k = 0; k < fields.size(); ++k) {
      for (std::size_t p = 0; p < s.nodes.size(); ++p) {
        const VectorXd f = fields[k](s.nodes[p][0], s.nodes[p][1]);
        r.col(static_cast<Eigen::Index>(k)) += s.weights[p] * (s.values[p].transpose() * f);
      }
    }
    return r;
  };
  int order = opt.quad_order > 0 ? opt.quad_order : 2 * degree + 2;
  out = integrate(order);
  for (;;) {
    if (2 * order > opt.max_quad_order) throw SimulationError("assemble_matrices: gain quadrature did not converge");
    const MatrixXd next = integrate(2 * order);
    const double change = (next - out).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    out = next;
    order *= 2;
    if (change <= opt.quad_tol * scale) break;
  }
  return out;
}

GalerkinMatrices assemble_common(const PieSystem& pie, int degree, const std::vector<PolyKernel>& phi) {
  if (degree < 0) throw std::invalid_argument("assemble_matrices: degree must be non-negative");
  GalerkinMatrices m;
  m.degree = degree;
  m.n_u = pie.n_u();
  const int n = static_cast<int>(phi.size());
  std::vector<FunctionVector> basis;
  std::vector<FunctionVector> t_phi;
  std::vector<FunctionVector> a_phi;
  for (const auto& p : phi) {
    basis.push_back(FunctionVector::plane(p));
    t_phi.push_back(pi_apply(pie.T, basis.back()));
    a_phi.push_back(pi_apply(pie.A, basis.back()));
  }
  m.T.resize(n, n);
  m.A.resize(n, n);
  m.T_gram.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      m.T(i, j) = inner_product(basis[i], t_phi[j]);
      m.A(i, j) = inner_product(basis[i], a_phi[j]);
      m.T_gram(i, j) = inner_product(t_phi[i], t_phi[j]);
    }
  }
  const int nw = pie.n_w();
  const int nz = pie.n_z();
  m.B_w.resize(n, nw);
  m.D_z.resize(nz, nw);
  for (int k = 0; k < nw; ++k) {
    const FunctionVector e = real_unit(nw, k);
    const FunctionVector b = pi_apply(pie.B, e);
    for (int i = 0; i < n; ++i) m.B_w(i, k) = -inner_product(basis[i], b);
    m.D_z.col(k) = -pi_apply(pie.D, e)[Space::R].eval(Point{}).col(0);
  }
  m.C_z.resize(nz, n);
  for (int j = 0; j < n; ++j) m.C_z.col(j) = pi_apply(pie.C, basis[j])[Space::R].eval(Point{}).col(0);
  const SpaceSignature qs = pie.q_sig();
  m.B_eta = MatrixXd::Zero(n, qs.n0 + qs.nx + qs.ny + qs.n2);
  return m;
}

}  // namespace

std::vector<PolyKernel> galerkin_basis(int degree, int n_u) {
  std::vector<PolyKernel> out;
  for (const auto& p : legendre_basis_2d(degree)) {
    for (int c = 0; c < n_u; ++c) {
      PolyKernel k(n_u, 1);
      k.set_block(c, 0, p);
      out.push_back(k);
    }
  }
  return out;
}

GalerkinMatrices assemble_matrices(const PieSystem& pie, int degree) {
  return assemble_common(pie, degree, galerkin_basis(std::max(degree, 0), pie.n_u()));
}

GalerkinMatrices assemble_matrices(const PieSystem& pie, const GainOp& gain, int degree, const AssemblyOptions& opt) {
  if (!(gain.in_sig() == pie.q_sig()) || gain.p_inv().n() != pie.n_u()) {
    throw SignatureError("assemble_matrices: gain does not match the sensed outputs");
  }
  const auto phi = galerkin_basis(std::max(degree, 0), pie.n_u());
  GalerkinMatrices m = assemble_common(pie, degree, phi);
  std::vector<FunctionVector> cq_phi;
  for (const auto& p : phi) cq_phi.push_back(pi_apply(pie.Cq, FunctionVector::plane(p)));
  m.A += gain_columns(gain, cq_phi, phi, m.n_u, degree, opt);
  std::vector<FunctionVector> dq_e;
  for (int k = 0; k < pie.n_w(); ++k) dq_e.push_back(pi_apply(pie.Dq, real_unit(pie.n_w(), k)));
  m.B_w -= gain_columns(gain, dq_e, phi, m.n_u, degree, opt);
  m.B_eta = -gain_columns(gain, unit_inputs(pie.q_sig()), phi, m.n_u, degree, opt);
  return m;
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be positive");
  if (!(t_final >= 0.0)) throw std::invalid_argument("SimConfig: t_final must be non-negative");
  if (!(noise.variance >= 0.0)) throw std::invalid_argument("SimConfig: noise variance must be non-negative");
  if (output_every < 1) throw std::invalid_argument("SimConfig: output_every must be positive");
  if (projection_order < 1) throw std::invalid_argument("SimConfig: projection order must be positive");
}

VectorXd project(const VectorField& v, int degree, int n_u, int order) {
  const auto phi = galerkin_basis(degree, n_u);
  const SampledBasis s = sample_basis(phi, n_u, order);
  VectorXd c = VectorXd::Zero(static_cast<Eigen::Index>(phi.size()));
  for (std::size_t p = 0; p < s.nodes.size(); ++p) {
    c += s.weights[p] * (s.values[p].transpose() * v(s.nodes[p][0], s.nodes[p][1]));
  }
  return c;
}

SimTrace simulate(const GalerkinMatrices& m, const SimConfig& cfg) {
  cfg.validate();
  const int n = m.size();
  const Eigen::FullPivLU<MatrixXd> lu(m.T);
  if (!lu.isInvertible() || lu.rcond() < 1e-12) throw SimulationError("simulate: Galerkin matrix of T is singular");
  const MatrixXd a = lu.solve(m.A);
  const MatrixXd bw = lu.solve(m.B_w);
  const MatrixXd be = lu.solve(m.B_eta);
  const int nw = static_cast<int>(m.B_w.cols());
  const int ne = static_cast<int>(m.B_eta.cols());

  VectorXd c = cfg.initial_error ? project(cfg.initial_error, m.degree, m.n_u, cfg.projection_order)
                                 : VectorXd::Zero(n);
  if (c.size() != n) throw SimulationError("simulate: initial error does not match the basis");
  auto w_at = [&](double t) -> VectorXd {
    if (!cfg.w) return VectorXd::Zero(nw);
    VectorXd w = cfg.w(t);
    if (w.size() != nw) throw SimulationError("simulate: disturbance has the wrong dimension");
    return w;
  };
  std::mt19937_64 rng(cfg.noise.seed);
  std::normal_distribution<double> normal(cfg.noise.mean, std::sqrt(cfg.noise.variance));
  const bool noisy = cfg.noise.variance > 0.0 || cfg.noise.mean != 0.0;

  SimTrace tr;
  auto record = [&](double t, const VectorXd& w) {
    tr.t.push_back(t);
    tr.c.push_back(c);
    tr.w.push_back(w);
    tr.z.push_back(m.C_z * c + m.D_z * w);
    tr.e_norm.push_back(c.norm());
    tr.te_norm.push_back(std::sqrt(std::max(0.0, c.dot(m.T_gram * c))));
  };
  const long steps = std::lround(cfg.t_final / cfg.dt);
  VectorXd eta = VectorXd::Zero(ne);
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    const VectorXd w = w_at(t);
    if (k % cfg.output_every == 0 || k == steps) record(t, w);
    if (k == steps) break;
    if (noisy) {
      for (int i = 0; i < ne; ++i) eta(i) = normal(rng);
    }
    c += cfg.dt * (a * c + bw * w + be * eta);
    const double norm = c.norm();
    if (!std::isfinite(norm) || norm > cfg.blow_up_norm) {
      std::ostringstream os;
      os << "simulate: state norm exceeded " << cfg.blow_up_norm << " at t = " << t + cfg.dt;
      throw BlowUpError(os.str(), t + cfg.dt);
    }
  }
  return tr;
}

double energy_ratio(const SimTrace& trace) {
  if (trace.size() < 2) throw SimulationError("energy_ratio: trace too short");
  double zz = 0.0;
  double ww = 0.0;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const double h = trace.t[k] - trace.t[k - 1];
    zz += 0.5 * h * (trace.z[k - 1].squaredNorm() + trace.z[k].squaredNorm());
    ww += 0.5 * h * (trace.w[k - 1].squaredNorm() + trace.w[k].squaredNorm());
  }
  if (ww <= 0.0) throw SimulationError("energy_ratio: disturbance has zero energy");
  return std::sqrt(zz / ww);
}

std::string SimTrace::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "t";
  const Eigen::Index nw = w.empty() ? 0 : w.front().size();
  const Eigen::Index nz = z.empty() ? 0 : z.front().size();
  for (Eigen::Index k = 0; k < nw; ++k) os << ",w" << k;
  os << ",e_norm,te_norm";
  for (Eigen::Index k = 0; k < nz; ++k) os << ",z" << k;
  os << "\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << t[i];
    for (Eigen::Index k = 0; k < nw; ++k) os << "," << w[i](k);
    os << "," << e_norm[i] << "," << te_norm[i];
    for (Eigen::Index k = 0; k < nz; ++k) os << "," << z[i](k);
    os << "\n";
  }
  return os.str();
}

Disturbance damped_sine(double amplitude, double decay, double freq) {
  return [=](double t) { return VectorXd::Constant(1, amplitude * std::exp(-decay * t) * std::sin(freq * t)); };
}

VectorField heat_initial_error(double amplitude) {
  // d_x^2 ((x-1)^4 - 1) = 12 (x-1)^2, d_y^2 sin(pi y / 2) = -(pi / 2)^2 sin(pi y / 2)
  return [amplitude](double x, double y) {
    const double h = std::numbers::pi / 2.0;
    const double v = amplitude * 12.0 * (x - 1.0) * (x - 1.0) * (-h * h) * std::sin(h * y);
    return VectorXd::Constant(1, -v);
  };
}

}  // namespace pie
