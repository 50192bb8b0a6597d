#include "pie/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace pie {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string status_name(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal: return "optimal";
    case SdpStatus::PrimalInfeasible: return "infeasible";
    case SdpStatus::DualInfeasible: return "dual_infeasible";
    case SdpStatus::MaxIter: return "max_iter";
    case SdpStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

void SdpProblem::validate() const {
  if (constraints.size() != rhs.size()) throw std::invalid_argument("SdpProblem: rhs size mismatch");
  auto check = [&](const LinearForm& f) {
    for (const auto& e : f.mat) {
      if (e.block < 0 || e.block >= static_cast<int>(block_sizes.size())) {
        throw std::invalid_argument("SdpProblem: block index out of range");
      }
      const int n = block_sizes[e.block];
      if (e.row < 0 || e.col < 0 || e.row >= n || e.col >= n || e.row > e.col) {
        throw std::invalid_argument("SdpProblem: entry must satisfy 0 <= row <= col < block size");
      }
    }
    for (const auto& [k, v] : f.free) {
      if (k < 0 || k >= num_free) throw std::invalid_argument("SdpProblem: free index out of range");
    }
  };
  check(objective);
  for (const auto& c : constraints) check(c);
  for (int n : block_sizes) {
    if (n <= 0) throw std::invalid_argument("SdpProblem: block sizes must be positive");
  }
}

double evaluate(const LinearForm& form, const std::vector<MatrixXd>& X, const VectorXd& f) {
  double s = 0.0;
  for (const auto& e : form.mat) s += (e.row == e.col ? 1.0 : 2.0) * e.value * X[e.block](e.row, e.col);
  for (const auto& [k, v] : form.free) s += v * f(k);
  return s;
}

namespace {

// Constraint data reorganized per block for the Schur complement.
struct BlockData {
  // Entries of every constraint in this block, grouped by constraint.
  std::vector<int> cons;                   // constraint ids with entries here
  std::vector<std::vector<SymEntry>> ents; // matching entries
};

struct Compiled {
  int m = 0;
  int nf = 0;
  std::vector<int> sizes;
  std::vector<BlockData> blocks;
  std::vector<MatrixXd> C;
  VectorXd c;
  VectorXd b;
  MatrixXd Af;  // m x nf
};

Compiled compile(const SdpProblem& p) {
  Compiled k;
  k.m = p.num_constraints();
  k.nf = p.num_free;
  k.sizes = p.block_sizes;
  const int nb = static_cast<int>(p.block_sizes.size());
  k.blocks.resize(nb);
  for (int b = 0; b < nb; ++b) k.C.push_back(MatrixXd::Zero(k.sizes[b], k.sizes[b]));
  for (const auto& e : p.objective.mat) {
    k.C[e.block](e.row, e.col) += e.value;
    if (e.row != e.col) k.C[e.block](e.col, e.row) += e.value;
  }
  k.c = VectorXd::Zero(k.nf);
  for (const auto& [i, v] : p.objective.free) k.c(i) += v;
  k.b = Eigen::Map<const VectorXd>(p.rhs.data(), k.m);
  k.Af = MatrixXd::Zero(k.m, k.nf);
  std::vector<std::vector<std::vector<SymEntry>>> tmp(nb, std::vector<std::vector<SymEntry>>());
  for (int b = 0; b < nb; ++b) tmp[b].resize(k.m);
  for (int i = 0; i < k.m; ++i) {
    for (const auto& e : p.constraints[i].mat) tmp[e.block][i].push_back(e);
    for (const auto& [j, v] : p.constraints[i].free) k.Af(i, j) += v;
  }
  for (int b = 0; b < nb; ++b) {
    for (int i = 0; i < k.m; ++i) {
      if (tmp[b][i].empty()) continue;
      k.blocks[b].cons.push_back(i);
      k.blocks[b].ents.push_back(std::move(tmp[b][i]));
    }
  }
  return k;
}

double sym_dot(const std::vector<SymEntry>& ents, const MatrixXd& X) {
  double s = 0.0;
  for (const auto& e : ents) s += (e.row == e.col ? 1.0 : 2.0) * e.value * X(e.row, e.col);
  return s;
}

// A(X) + Af f
VectorXd apply_A(const Compiled& k, const std::vector<MatrixXd>& X, const VectorXd& f) {
  VectorXd r = k.Af * f;
  for (std::size_t b = 0; b < k.blocks.size(); ++b) {
    const auto& bd = k.blocks[b];
    for (std::size_t t = 0; t < bd.cons.size(); ++t) r(bd.cons[t]) += sym_dot(bd.ents[t], X[b]);
  }
  return r;
}

// A^T y per block
std::vector<MatrixXd> apply_At(const Compiled& k, const VectorXd& y) {
  std::vector<MatrixXd> out;
  for (std::size_t b = 0; b < k.blocks.size(); ++b) {
    MatrixXd M = MatrixXd::Zero(k.sizes[b], k.sizes[b]);
    const auto& bd = k.blocks[b];
    for (std::size_t t = 0; t < bd.cons.size(); ++t) {
      const double yi = y(bd.cons[t]);
      if (yi == 0.0) continue;
      for (const auto& e : bd.ents[t]) {
        M(e.row, e.col) += yi * e.value;
        if (e.row != e.col) M(e.col, e.row) += yi * e.value;
      }
    }
    out.push_back(std::move(M));
  }
  return out;
}

double frob(const std::vector<MatrixXd>& v) {
  double s = 0.0;
  for (const auto& m : v) s += m.squaredNorm();
  return std::sqrt(s);
}

double inner(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i].array() * b[i].array()).sum();
  return s;
}

double min_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

struct Scaling {
  MatrixXd G;  // W = G G^T
  MatrixXd W;
  VectorXd d;  // scaled X = scaled Z = diag(d)
  MatrixXd LX; // Cholesky of X
  MatrixXd LZ; // Cholesky of Z
};

bool nt_scaling(const MatrixXd& X, const MatrixXd& Z, Scaling& s) {
  Eigen::LLT<MatrixXd> lx(X);
  Eigen::LLT<MatrixXd> lz(Z);
  if (lx.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
  s.LX = lx.matrixL();
  s.LZ = lz.matrixL();
  // With L_Z^T L_X = U S V^T: d = s and G = L_X V S^{-1/2}. Working from the
  // factors avoids forming X Z, which loses the small eigenvalues.
  Eigen::JacobiSVD<MatrixXd> svd(s.LZ.transpose() * s.LX, Eigen::ComputeFullU | Eigen::ComputeFullV);
  s.d = svd.singularValues();
  if (!(s.d.minCoeff() > 0)) return false;
  s.G = s.LX * svd.matrixV() * s.d.cwiseSqrt().cwiseInverse().asDiagonal();
  s.W = s.G * s.G.transpose();
  s.W = 0.5 * (s.W + s.W.transpose());
  return true;
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& prob, const SdpOptions& opt) {
  prob.validate();
  const Compiled k = compile(prob);
  const int m = k.m;
  const int nf = k.nf;
  const int nb = static_cast<int>(k.sizes.size());
  int ntot = 0;
  for (int n : k.sizes) ntot += n;

  SdpSolution sol;
  if (ntot == 0) {
    sol.message = "no semidefinite blocks";
    return sol;
  }

  // Initial point following the usual norm-based scaling.
  double max_a = 0.0;
  double max_ratio = 0.0;
  {
    VectorXd an = VectorXd::Zero(m);
    for (const auto& bd : k.blocks) {
      for (std::size_t t = 0; t < bd.cons.size(); ++t) {
        double s = 0.0;
        for (const auto& e : bd.ents[t]) s += (e.row == e.col ? 1.0 : 2.0) * e.value * e.value;
        an(bd.cons[t]) += s;
      }
    }
    for (int i = 0; i < m; ++i) {
      const double a = std::sqrt(an(i) + k.Af.row(i).squaredNorm());
      max_a = std::max(max_a, a);
      max_ratio = std::max(max_ratio, (1.0 + std::abs(k.b(i))) / (1.0 + a));
    }
  }
  double cnorm = 0.0;
  for (const auto& c : k.C) cnorm += c.squaredNorm();
  cnorm = std::sqrt(cnorm + k.c.squaredNorm());
  const double bnorm = k.b.norm();
  const double sq = std::sqrt(static_cast<double>(ntot));
  const double xi = std::max({10.0, sq, sq * max_ratio});
  const double eta = std::max({10.0, sq, max_a, cnorm});

  std::vector<MatrixXd> X, Z;
  for (int n : k.sizes) {
    X.push_back(xi * MatrixXd::Identity(n, n));
    Z.push_back(eta * MatrixXd::Identity(n, n));
  }
  VectorXd y = VectorXd::Zero(m);
  VectorXd f = VectorXd::Zero(nf);

  SdpSolution best;
  double best_score = std::numeric_limits<double>::infinity();
  auto finish = [&](SdpStatus st, const std::string& msg) {
    sol.status = st;
    sol.message = msg;
    sol.X = X;
    sol.Z = Z;
    sol.y = y;
    sol.f = f;
    if ((st == SdpStatus::MaxIter || st == SdpStatus::NumericalFailure) && best_score <= opt.accept_gap) {
      best.status = SdpStatus::Optimal;
      best.message = "converged to reduced accuracy (" + msg + ")";
      best.iterations = sol.iterations;
      return best;
    }
    return sol;
  };

  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    sol.iterations = iter;
    // Residuals.
    const VectorXd rp = k.b - apply_A(k, X, f);
    std::vector<MatrixXd> Rd = apply_At(k, y);
    for (int b = 0; b < nb; ++b) Rd[b] = k.C[b] - Rd[b] - Z[b];
    const VectorXd rf = k.c - k.Af.transpose() * y;
    const double pobj = inner(k.C, X) + k.c.dot(f);
    const double dobj = k.b.dot(y);
    const double mu = inner(X, Z) / ntot;
    const double relp = rp.norm() / (1.0 + bnorm);
    const double reld = (frob(Rd) + rf.norm()) / (1.0 + cnorm);
    const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    sol.primal_objective = pobj;
    sol.dual_objective = dobj;
    sol.primal_residual = relp;
    sol.dual_residual = reld;
    sol.gap = relgap;
    if (opt.verbose) {
      std::cerr << "iter " << iter << " pobj " << pobj << " dobj " << dobj << " relp " << relp << " reld " << reld
                << " gap " << relgap << " mu " << mu << "\n";
    }
    if (!std::isfinite(pobj) || !std::isfinite(dobj) || !std::isfinite(mu)) {
      return finish(SdpStatus::NumericalFailure, "non-finite iterate");
    }
    if (relp <= opt.tol && reld <= opt.tol && relgap <= opt.tol) return finish(SdpStatus::Optimal, "converged");
    if (relp <= opt.accept_tol && reld <= opt.accept_tol && relgap < best_score) {
      best_score = relgap;
      best = sol;
      best.X = X;
      best.Z = Z;
      best.y = y;
      best.f = f;
    }

    // Infeasibility certificates from normalized rays.
    // y certifies primal infeasibility when b^T y > 0, -A^T y is psd and y
    // annihilates the free columns.
    if (dobj > 0) {
      const std::vector<MatrixXd> aty = apply_At(k, y);
      double viol = (k.Af.transpose() * y).norm();
      for (int b = 0; b < nb; ++b) {
        const double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(aty[b], Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
        viol = std::max(viol, lmax);
      }
      if (viol / dobj <= opt.infeas_tol) return finish(SdpStatus::PrimalInfeasible, "dual improving ray found");
    }
    if (pobj < 0) {
      const double res = apply_A(k, X, f).norm() / -pobj;
      if (res <= opt.infeas_tol) return finish(SdpStatus::DualInfeasible, "primal improving ray found");
    }
    if (iter == opt.max_iter) break;

    // Scaling and Schur complement.
    std::vector<Scaling> sc(nb);
    for (int b = 0; b < nb; ++b) {
      if (!nt_scaling(X[b], Z[b], sc[b])) return finish(SdpStatus::NumericalFailure, "lost positive definiteness in scaling");
    }
    MatrixXd M = MatrixXd::Zero(m, m);
    for (int b = 0; b < nb; ++b) {
      const auto& bd = k.blocks[b];
      const MatrixXd& W = sc[b].W;
      const int n = k.sizes[b];
      for (std::size_t t = 0; t < bd.cons.size(); ++t) {
        const auto& ents = bd.ents[t];
        // W A W = W(:, S) A(S, S) W(S, :) over the indices S touched by A.
        std::vector<int> idx;
        for (const auto& e : ents) {
          idx.push_back(e.row);
          idx.push_back(e.col);
        }
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        const int s = static_cast<int>(idx.size());
        MatrixXd As = MatrixXd::Zero(s, s);
        for (const auto& e : ents) {
          const int a = static_cast<int>(std::lower_bound(idx.begin(), idx.end(), e.row) - idx.begin());
          const int c = static_cast<int>(std::lower_bound(idx.begin(), idx.end(), e.col) - idx.begin());
          As(a, c) += e.value;
          if (a != c) As(c, a) += e.value;
        }
        MatrixXd Ws(n, s);
        for (int j = 0; j < s; ++j) Ws.col(j) = W.col(idx[j]);
        MatrixXd F(n, n);
        F.noalias() = Ws * (As * Ws.transpose());
        const int i = bd.cons[t];
        for (std::size_t u = t; u < bd.cons.size(); ++u) {
          const double v = sym_dot(bd.ents[u], F);
          M(i, bd.cons[u]) += v;
          if (u != t) M(bd.cons[u], i) += v;
        }
      }
    }
    MatrixXd K = MatrixXd::Zero(m + nf, m + nf);
    K.topLeftCorner(m, m) = M;
    K.topRightCorner(m, nf) = k.Af;
    K.bottomLeftCorner(nf, m) = k.Af.transpose();
    // Tiny regularization keeps the factorization usable when constraints
    // become nearly dependent close to the optimum; refinement runs against
    // the exact matrix so the regularization does not bias the step.
    const double reg = 1e-14 * std::max(1.0, m > 0 ? M.diagonal().cwiseAbs().maxCoeff() : 0.0);
    MatrixXd Kreg = K;
    Kreg.topLeftCorner(m, m).diagonal().array() += reg;
    Eigen::PartialPivLU<MatrixXd> lu;
    if (m + nf > 0) lu.compute(Kreg);

    // Solve for a given scaled right-hand side Rc (per block, in scaled space).
    std::vector<MatrixXd> dX(nb), dZ(nb), dXs(nb), dZs(nb);
    VectorXd dy, df;
    // Rebuilds dZ, the scaled pair (dXs, dZs) and dX = G dXs G^T from dy.
    auto finish_dir = [&](const std::vector<MatrixXd>& Hs) {
      const std::vector<MatrixXd> Aty = apply_At(k, dy);
      for (int b = 0; b < nb; ++b) {
        dZ[b] = Rd[b] - Aty[b];
        dZ[b] = 0.5 * (dZ[b] + dZ[b].transpose());
        dZs[b] = sc[b].G.transpose() * dZ[b] * sc[b].G;
        dZs[b] = 0.5 * (dZs[b] + dZs[b].transpose());
        dXs[b] = Hs[b] - dZs[b];
        dX[b] = sc[b].G * dXs[b] * sc[b].G.transpose();
        dX[b] = 0.5 * (dX[b] + dX[b].transpose());
      }
    };
    auto solve_dir = [&](const std::vector<MatrixXd>& Rc) {
      // H_ij = Rc_ij / (d_i + d_j); dXs = H - G^T dZ G; dZ = Rd - A^T dy.
      std::vector<MatrixXd> Hs(nb), GHG(nb), WRW(nb);
      for (int b = 0; b < nb; ++b) {
        const VectorXd& d = sc[b].d;
        Hs[b] = Rc[b];
        for (int i = 0; i < Hs[b].rows(); ++i) {
          for (int j = 0; j < Hs[b].cols(); ++j) Hs[b](i, j) /= d(i) + d(j);
        }
        GHG[b] = sc[b].G * Hs[b] * sc[b].G.transpose();
        WRW[b] = sc[b].W * Rd[b] * sc[b].W;
      }
      VectorXd rhs(m + nf);
      rhs.head(m) = rp - apply_A(k, GHG, VectorXd::Zero(nf)) + apply_A(k, WRW, VectorXd::Zero(nf));
      rhs.tail(nf) = rf;
      VectorXd sol_v = VectorXd::Zero(m + nf);
      if (m + nf > 0) {
        sol_v = lu.solve(rhs);
        for (int ref = 0; ref < 3; ++ref) sol_v += lu.solve(rhs - K * sol_v);
      }
      dy = sol_v.head(m);
      df = sol_v.tail(nf);
      finish_dir(Hs);
      if (m > 0) {
        // Refinement on the full Newton system: the primal part of the
        // residual is pushed back through the Schur complement while that
        // keeps reducing it.
        double last = std::numeric_limits<double>::infinity();
        for (int pass = 0; pass < 4; ++pass) {
          VectorXd e(m + nf);
          e.head(m) = rp - apply_A(k, dX, df);
          e.tail(nf).setZero();
          const double en = e.norm();
          if (!(en < 0.5 * last) || en <= 1e-15 * (1.0 + rp.norm())) break;
          last = en;
          VectorXd c = lu.solve(e);
          for (int ref = 0; ref < 2; ++ref) c += lu.solve(e - K * c);
          dy += c.head(m);
          df += c.tail(nf);
          finish_dir(Hs);
        }
      }
    };
    // Step lengths in the scaled space, where both X and Z are diag(d).
    auto step_lengths = [&](double& ap, double& ad) {
      ap = 1.0;
      ad = 1.0;
      for (int b = 0; b < nb; ++b) {
        const VectorXd s = sc[b].d.cwiseSqrt().cwiseInverse();
        const double lx = min_eig(s.asDiagonal() * dXs[b] * s.asDiagonal());
        const double lz = min_eig(s.asDiagonal() * dZs[b] * s.asDiagonal());
        if (lx < 0) ap = std::min(ap, -1.0 / lx);
        if (lz < 0) ad = std::min(ad, -1.0 / lz);
      }
    };

    // Predictor.
    std::vector<MatrixXd> Rc(nb);
    for (int b = 0; b < nb; ++b) {
      Rc[b] = MatrixXd::Zero(k.sizes[b], k.sizes[b]);
      Rc[b].diagonal() = -2.0 * sc[b].d.array().square();
    }
    solve_dir(Rc);
    if (!dy.allFinite() || !df.allFinite()) return finish(SdpStatus::NumericalFailure, "Schur system failed");
    double ap, ad;
    step_lengths(ap, ad);
    double mu_aff = 0.0;
    for (int b = 0; b < nb; ++b) mu_aff += ((X[b] + ap * dX[b]).array() * (Z[b] + ad * dZ[b]).array()).sum();
    mu_aff /= ntot;
    const double ratio = std::max(0.0, mu_aff / mu);
    const bool feasible_ish = relp < 1e-2 && reld < 1e-2;
    const double sigma = std::min(1.0, std::pow(ratio, feasible_ish ? 3.0 : 2.0));

    // Corrector in the scaled space.
    for (int b = 0; b < nb; ++b) {
      Rc[b] = -(dXs[b] * dZs[b] + dZs[b] * dXs[b]);
      Rc[b].diagonal().array() += 2.0 * sigma * mu - 2.0 * sc[b].d.array().square();
    }
    solve_dir(Rc);
    if (!dy.allFinite() || !df.allFinite()) return finish(SdpStatus::NumericalFailure, "Schur system failed");
    step_lengths(ap, ad);
    const double tau = std::min(0.995, 0.9 + 0.09 * std::min(ap, ad));
    ap = std::min(1.0, tau * ap);
    ad = std::min(1.0, tau * ad);
    // Rounding can leave the new point on the boundary; back off until both
    // sides factor.
    std::vector<MatrixXd> Xn(nb), Zn(nb);
    for (int tries = 0;; ++tries) {
      bool ok = true;
      for (int b = 0; b < nb && ok; ++b) {
        Xn[b] = X[b] + ap * dX[b];
        Zn[b] = Z[b] + ad * dZ[b];
        Xn[b] = 0.5 * (Xn[b] + Xn[b].transpose());
        Zn[b] = 0.5 * (Zn[b] + Zn[b].transpose());
        ok = Eigen::LLT<MatrixXd>(Xn[b]).info() == Eigen::Success &&
             Eigen::LLT<MatrixXd>(Zn[b]).info() == Eigen::Success;
      }
      if (ok) break;
      if (tries == 30) return finish(SdpStatus::NumericalFailure, "lost positive definiteness in step");
      ap *= 0.8;
      ad *= 0.8;
    }
    if (opt.verbose) std::cerr << "  sigma " << sigma << " ap " << ap << " ad " << ad << "\n";
    X.swap(Xn);
    Z.swap(Zn);
    f += ap * df;
    y += ad * dy;
    if (ap < 1e-12 && ad < 1e-12) return finish(SdpStatus::NumericalFailure, "step length vanished");
  }
  return finish(SdpStatus::MaxIter, "iteration limit reached");
}

KktResiduals kkt_residuals(const SdpProblem& prob, const SdpSolution& sol) {
  const Compiled k = compile(prob);
  KktResiduals r;
  r.primal = (k.b - apply_A(k, sol.X, sol.f)).norm();
  std::vector<MatrixXd> Rd = apply_At(k, sol.y);
  for (std::size_t b = 0; b < Rd.size(); ++b) Rd[b] = k.C[b] - Rd[b] - sol.Z[b];
  r.dual = frob(Rd) + (k.c - k.Af.transpose() * sol.y).norm();
  r.gap = std::abs(inner(k.C, sol.X) + k.c.dot(sol.f) - k.b.dot(sol.y));
  r.min_eig_x = std::numeric_limits<double>::infinity();
  r.min_eig_z = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < sol.X.size(); ++b) {
    r.min_eig_x = std::min(r.min_eig_x, min_eig(sol.X[b]));
    r.min_eig_z = std::min(r.min_eig_z, min_eig(sol.Z[b]));
  }
  return r;
}

}  // namespace pie
