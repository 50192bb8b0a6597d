#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pie/pde_model.hpp"

namespace pie {

/// Outcome of one randomized invariant suite.
struct OracleResult {
  std::string name;
  int cases = 0;
  double max_residual = 0.0;
  double tol = 0.0;
  std::string note;

  bool passed() const { return cases > 0 && max_residual <= tol; }
};

/// pi_apply(a o b, f) against pi_apply(a, pi_apply(b, f)).
OracleResult check_compose(std::uint64_t seed, int pairs = 50, int inputs = 20);
/// (a o b) o c against a o (b o c) at kernel level.
OracleResult check_associativity(std::uint64_t seed, int triples = 50);
/// <g, op f> against <op* g, f>, plus op** = op.
OracleResult check_adjoint(std::uint64_t seed, int cases = 50);
/// Symbolic d_x^k d_y^l of pi_apply(T, f) against diff_compose(T, k, l).
OracleResult check_derivative(std::uint64_t seed, int cases = 50);
/// Boundary substitution of pi_apply(op, f) against dirac_compose.
OracleResult check_dirac(std::uint64_t seed, int cases = 50);

/// u = T d_x^2 d_y^2 u for random admissible u and v = d_x^2 d_y^2 T v for
/// random v, both of degree at most 5 (scalar states only).
OracleResult check_fundamental_identities(const BoundarySpec& bc, std::uint64_t seed, int cases = 20);
/// v = d_x^2 d_y^2 T v for a T without its boundary conditions.
OracleResult check_t_inverts_derivative(const BlockPiOp& T, std::uint64_t seed, int cases = 20);

/// Two-sided round trip of the separable inverse on random operators and the
/// hand-derived scalar case, relative L2 residual.
OracleResult check_inversion(std::uint64_t seed, int cases = 10);

/// Adds c1 + c2 s along each axis so that a scalar u meets the conditions.
PolyKernel project_to_bc(PolyKernel u, const BoundarySpec& bc);

std::vector<OracleResult> run_operator_oracles(std::uint64_t seed);

}  // namespace pie
