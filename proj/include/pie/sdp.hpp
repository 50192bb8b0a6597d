#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pie {

/// Entry of a symmetric block matrix; (row, col) with row <= col stands for
/// both (row, col) and (col, row).
struct SymEntry {
  int block;
  int row;
  int col;
  double value;
};

/// Linear form <A, X> + a^T f in the block variable X and free variables f.
struct LinearForm {
  std::vector<SymEntry> mat;
  std::vector<std::pair<int, double>> free;
};

/// minimize <C, X> + c^T f
/// s.t.     <A_i, X> + a_i^T f = b_i,  X = diag(X_1, ..., X_k) psd, f free.
struct SdpProblem {
  std::vector<int> block_sizes;
  int num_free = 0;
  LinearForm objective;
  std::vector<LinearForm> constraints;
  std::vector<double> rhs;

  int num_constraints() const { return static_cast<int>(constraints.size()); }
  void add_constraint(LinearForm f, double b) {
    constraints.push_back(std::move(f));
    rhs.push_back(b);
  }
  /// Throws std::invalid_argument on malformed entries.
  void validate() const;
};

enum class SdpStatus { Optimal, PrimalInfeasible, DualInfeasible, MaxIter, NumericalFailure };

std::string status_name(SdpStatus s);
inline std::ostream& operator<<(std::ostream& os, SdpStatus s) { return os << status_name(s); }

struct SdpOptions {
  double tol = 1e-8;
  int max_iter = 100;
  /// Normalized certificate threshold for infeasibility.
  double infeas_tol = 1e-8;
  /// When progress stalls before tol is met, the iterate with the smallest
  /// gap among those with residuals below accept_tol is still reported
  /// optimal if that gap is below accept_gap.
  double accept_tol = 1e-5;
  double accept_gap = 1e-4;
  bool verbose = false;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::NumericalFailure;
  std::vector<Eigen::MatrixXd> X;
  std::vector<Eigen::MatrixXd> Z;
  Eigen::VectorXd y;
  Eigen::VectorXd f;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  /// Relative residuals at the returned point.
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;
  std::string message;
};

SdpSolution solve_sdp(const SdpProblem& prob, const SdpOptions& opt = {});

/// <form, (X, f)>
double evaluate(const LinearForm& form, const std::vector<Eigen::MatrixXd>& X, const Eigen::VectorXd& f);

/// Unscaled KKT residuals of a candidate primal-dual point.
struct KktResiduals {
  double primal = 0.0;         // ||b - A(X) - Af f||
  double dual = 0.0;           // ||C - A^T y - Z|| + ||c - Af^T y||
  double gap = 0.0;            // |<C,X> + c^T f - b^T y|
  double min_eig_x = 0.0;
  double min_eig_z = 0.0;
};
KktResiduals kkt_residuals(const SdpProblem& prob, const SdpSolution& sol);

/// Sparse SDPA-like text format. The standard SDPA form
///   max <F0, Y>  s.t. <F_i, Y> = c_i, Y psd
/// is this problem with F0 = -C; free variables are split into a diagonal
/// (LP) block as f = f+ - f-, recorded in a leading "*free" comment so that
/// reading restores them.
void write_sdpa(const SdpProblem& prob, std::ostream& os);
SdpProblem read_sdpa(std::istream& is);

}  // namespace pie
