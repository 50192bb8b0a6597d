#pragma once

#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

#include "pie/piop.hpp"

namespace pie {

class InversionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// M[R0] + Z(x,y)^T H int int Z(theta,eta) v(theta,eta) on L2^n[x,y].
struct SeparableOp {
  PolyKernel R0;      // n x n in (x, y)
  PolyKernel Z;       // p x n in (x, y)
  Eigen::MatrixXd H;  // p x p

  int n() const { return R0.rows(); }
  int p() const { return static_cast<int>(H.rows()); }
  BlockPiOp to_pi() const;
};

/// Splits an operator with only a multiplier and a full double integral on
/// L2^n[x,y] into (R0, Z, H), Z the monomials of the integral kernel. Throws
/// StructureError for any other term.
SeparableOp separate(const BlockPiOp& op);

using MatrixField = std::function<Eigen::MatrixXd(double x, double y)>;
using VectorField = std::function<Eigen::VectorXd(double x, double y)>;

/// (A v)(x,y) = M(x,y) v(x,y) + L(x,y) C int int R(t,s) v(t,s) dt ds on
/// L2^n[x,y], with kernels given as callables and the double integral taken by
/// a tensor Gauss-Legendre rule of the stored order.
class EvaluableOp {
 public:
  EvaluableOp() = default;
  EvaluableOp(int n, MatrixField m, MatrixField l, Eigen::MatrixXd core, MatrixField r, int order);
  static EvaluableOp from_separable(const SeparableOp& op, int order);

  int n() const { return n_; }
  int rank() const { return static_cast<int>(core_.rows()); }
  int order() const { return order_; }
  Eigen::MatrixXd multiplier(double x, double y) const { return m_(x, y); }
  Eigen::MatrixXd left(double x, double y) const { return l_(x, y); }
  Eigen::MatrixXd right(double x, double y) const { return r_(x, y); }
  const Eigen::MatrixXd& core() const { return core_; }

  /// int int R v.
  Eigen::VectorXd moment(const VectorField& v) const;
  VectorField apply(const VectorField& v) const;

 private:
  int n_ = 0;
  MatrixField m_;
  MatrixField l_;
  Eigen::MatrixXd core_;
  MatrixField r_;
  int order_ = 0;
};

struct InverseOptions {
  /// Starting quadrature order; doubled until K settles.
  int order = 8;
  double k_tol = 1e-10;
  int max_order = 512;
  /// Smallest admissible |det M| on the check grid and smallest singular
  /// value of I + K C.
  double singular_tol = 1e-9;
};

/// Two-sided inverse: M^{-1} + M^{-1} L Chat int int R M^{-1} with
/// K = int int R M^{-1} L and Chat = -C (I + K C)^{-1}.
EvaluableOp invert(const EvaluableOp& op, const InverseOptions& opt = {});
EvaluableOp invert(const SeparableOp& op, const InverseOptions& opt = {});

/// -H (I + K H)^{-1}; throws InversionError when I + K H is singular.
Eigen::MatrixXd inverse_core(const Eigen::MatrixXd& H, const Eigen::MatrixXd& K, double singular_tol = 1e-9);

/// Luenberger gain L = P^{-1} W acting on polynomial sensed outputs.
class GainOp {
 public:
  GainOp() = default;
  GainOp(EvaluableOp p_inv, BlockPiOp w);

  const EvaluableOp& p_inv() const { return p_inv_; }
  const BlockPiOp& w() const { return w_; }
  const SpaceSignature& in_sig() const { return w_.in_sig(); }
  VectorField apply(const FunctionVector& q) const;

 private:
  EvaluableOp p_inv_;
  BlockPiOp w_;
};

GainOp reconstruct_gain(const EvaluableOp& p_inv, const BlockPiOp& w);

/// Plane component of a polynomial function vector as a callable.
VectorField plane_field(const PolyKernel& f);

}  // namespace pie
