#pragma once

#include <random>
#include <vector>

#include "pie/piop.hpp"

// Random operators and functions for the oracle suites.
namespace pie::testing {

inline std::vector<Var> kernel_vars(Rel rx, Rel ry) {
  std::vector<Var> v;
  auto add = [&](Rel r, Var out, Var in) {
    switch (r) {
      case Rel::Mult:
      case Rel::Ext:
        v.push_back(out);
        break;
      case Rel::Lower:
      case Rel::Upper:
        v.push_back(out);
        v.push_back(in);
        break;
      case Rel::Full:
        v.push_back(in);
        break;
      case Rel::None:
        break;
    }
  };
  add(rx, Var::X, Var::Theta);
  add(ry, Var::Y, Var::Eta);
  return v;
}

inline PolyKernel random_poly(std::mt19937_64& rng, const std::vector<Var>& vars, int degree, int rows,
                              int cols, double density = 0.6) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution keep(density);
  PolyKernel p(rows, cols);
  MonomialBasis b(vars, degree);
  for (const auto& e : b.exponents()) {
    if (!keep(rng)) continue;
    Eigen::MatrixXd c(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) c(i, j) = u(rng);
    }
    p.add_term(e, c);
  }
  return p;
}

inline SpaceSignature random_sig(std::mt19937_64& rng, int maxdim = 2) {
  std::uniform_int_distribution<int> d(0, maxdim);
  SpaceSignature s;
  do {
    s = {d(rng), d(rng), d(rng), d(rng)};
  } while (s.empty());
  return s;
}

inline std::vector<Rel> rels_for(bool out_has, bool in_has) {
  if (out_has && in_has) return {Rel::Mult, Rel::Lower, Rel::Upper};
  if (out_has) return {Rel::Ext};
  if (in_has) return {Rel::Full};
  return {Rel::None};
}

inline BlockPiOp random_op(std::mt19937_64& rng, SpaceSignature out, SpaceSignature in, int degree = 2,
                           double term_prob = 0.5) {
  BlockPiOp op(out, in);
  std::bernoulli_distribution use(term_prob);
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      if (out.dim(so) == 0 || in.dim(si) == 0) continue;
      for (Rel rx : rels_for(has_x(so), has_x(si))) {
        for (Rel ry : rels_for(has_y(so), has_y(si))) {
          if (!use(rng)) continue;
          op.add_term(so, si, rx, ry,
                      random_poly(rng, kernel_vars(rx, ry), degree, out.dim(so), in.dim(si)));
        }
      }
    }
  }
  return op;
}

inline FunctionVector random_function(std::mt19937_64& rng, SpaceSignature sig, int degree = 2) {
  FunctionVector f(sig);
  for (Space s : kSpaces) {
    if (sig.dim(s) == 0) continue;
    std::vector<Var> vars;
    if (has_x(s)) vars.push_back(Var::X);
    if (has_y(s)) vars.push_back(Var::Y);
    f[s] = random_poly(rng, vars, degree, sig.dim(s), 1, 0.8);
  }
  return f;
}

inline double rel_gap(const FunctionVector& a, const FunctionVector& b) {
  const double scale = std::max({1.0, a.max_abs_coeff(), b.max_abs_coeff()});
  return (a - b).max_abs_coeff() / scale;
}

inline double rel_gap(const BlockPiOp& a, const BlockPiOp& b) {
  const double scale = std::max({1.0, a.max_abs_coeff(), b.max_abs_coeff()});
  return (a - b).max_abs_coeff() / scale;
}

}  // namespace pie::testing
