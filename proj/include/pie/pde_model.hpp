#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "pie/piop.hpp"

namespace pie {

class WellPosednessError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Axis { X = 0, Y = 1 };

/// One term alpha * d^order u evaluated at the given endpoint of an axis.
struct BoundaryTerm {
  int endpoint = 0;  // 0 or 1
  int order = 0;     // 0 or 1
  Eigen::MatrixXd coeff;
};

/// A boundary condition sum_k alpha_k d^{o_k} u(e_k) = 0, uniform along the
/// other axis. A single term covers Dirichlet and Neumann conditions, two
/// terms at the same endpoint cover Robin conditions.
struct BoundaryCondition {
  std::vector<BoundaryTerm> terms;
};

/// Two conditions per axis.
struct BoundarySpec {
  std::array<std::array<BoundaryCondition, 2>, 2> axis;

  const std::array<BoundaryCondition, 2>& on(Axis a) const { return axis[static_cast<int>(a)]; }
  std::array<BoundaryCondition, 2>& on(Axis a) { return axis[static_cast<int>(a)]; }

  /// u(0)=0 and u'(1)=0 in both x and y.
  static BoundarySpec dirichlet_neumann(int n_u);
};

/// Sensed outputs q = [q1; q2; q3] with q1 in R^nq1, q2 in L2[x] (y-edge
/// traces) and q3 in L2[y] (x-edge traces).
///
/// C1 acts on the 16 n_u corner values ordered as
///   [u, u_x, u_y, u_xy] each at corners (0,0), (1,0), (0,1), (1,1).
/// C2 acts on 12 n_u functions of x ordered as
///   [u_xx, u_xxy, u, u_x, u_y, u_xy] each at y = 0 then y = 1;
/// the first 4 n_u columns are the second-derivative traces, so a 4 n_u wide
/// C2 is accepted and zero-padded. C3 mirrors C2 with x and y exchanged:
///   [u_yy, u_xyy, u, u_y, u_x, u_xy] each at x = 0 then x = 1.
struct SensingSpec {
  int nq1 = 0;
  int nq2 = 0;
  int nq3 = 0;
  Eigen::MatrixXd C1;  // nq1 x 16 n_u
  PolyKernel C2;       // nq2 x {4,12} n_u, in x
  PolyKernel C3;       // nq3 x {4,12} n_u, in y
  Eigen::MatrixXd D1;  // nq1 x n_w
  PolyKernel D2;       // nq2 x n_w, in x
  PolyKernel D3;       // nq3 x n_w, in y

  SpaceSignature signature() const { return {nq1, nq2, nq3, 0}; }
};

/// Column offset inside the extended edge trace vector. "Along" differentiates
/// along the edge, "Across" normal to it.
enum class EdgeTrace { SecondAlong = 0, SecondAlongAcross = 1, Value = 2, Along = 3, Across = 4, Mixed = 5 };
int edge_trace_column(EdgeTrace kind, int endpoint, int n_u);

/// u_t = sum M[A_ij] d_x^i d_y^j u + M[B] w,
/// z   = sum int[C_ij] d_x^i d_y^j u + D w.
struct PdeSystem {
  int n_u = 1;
  int n_w = 0;
  int n_z = 0;
  std::array<std::array<PolyKernel, 3>, 3> A;  // n_u x n_u in (x,y)
  PolyKernel B;                                // n_u x n_w in (x,y)
  std::array<std::array<PolyKernel, 3>, 3> C;  // n_z x n_u in (x,y)
  Eigen::MatrixXd D;                           // n_z x n_w
  BoundarySpec bc;
  SensingSpec sensing;

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;

  /// Zero-initialised system with the given dimensions and Dirichlet-Neumann
  /// boundary conditions.
  static PdeSystem zeros(int n_u, int n_w, int n_z);
};

/// T v_t = A v + B w, z = C v + D w, q = Cq v + Dq w with v = d_x^2 d_y^2 u.
struct PieSystem {
  BlockPiOp T;
  BlockPiOp A;
  BlockPiOp B;
  BlockPiOp C;
  BlockPiOp D;
  BlockPiOp Cq;
  BlockPiOp Dq;
  /// Derivative orders (i, j) of u entering A or C; empty when the system
  /// was not derived from a PDE.
  std::vector<std::array<int, 2>> state_orders;

  int n_u() const { return T.out_sig().n2; }
  int n_w() const { return B.in_sig().n0; }
  int n_z() const { return C.out_sig().n0; }
  SpaceSignature q_sig() const { return Cq.out_sig(); }
};

/// 1D factor: u(s) = int_0^s T_L(s,t) v(t) dt + int_s^1 T_U(s,t) v(t) dt with
/// v = u''. Kernels are in (X, Theta).
struct OneDimFactor {
  PolyKernel lower;
  PolyKernel upper;
};
OneDimFactor build_1d_factor(const std::array<BoundaryCondition, 2>& conds, int n_u, const std::string& axis);

BlockPiOp build_T(const BoundarySpec& bc, int n_u);
PieSystem build_pie(const PdeSystem& pde);

/// Lambda-type trace operators composed with T, as used for Cq.
BlockPiOp corner_traces(const BlockPiOp& T);  // -> R^{16 n_u}
BlockPiOp y_edge_traces(const BlockPiOp& T);  // -> L2^{12 n_u}[x]
BlockPiOp x_edge_traces(const BlockPiOp& T);  // -> L2^{12 n_u}[y]

/// Residual of the boundary conditions for a polynomial state u(x,y).
bool check_state_membership(const PolyKernel& u, const BoundarySpec& bc, double tol = 1e-12);

/// u_t = u_xx + u_yy + r u + w, z = int u, with u(0,y) = u_x(1,y) = 0,
/// u(x,0) = u_y(x,1) = 0 and sensors u(x,1) (in L2[x]) and u(1,y) (in L2[y]).
PdeSystem heat_estimation_example(double r);

/// Multiplier on a one-dimensional space: M[K] with K in x (space X) or y (Y).
BlockPiOp line_multiplier(Space s, const PolyKernel& k);
/// int_{[0,1]^2} K(theta,eta) v(theta,eta): L2^{cols}[x,y] -> R^{rows}, K given in (x, y).
BlockPiOp plane_integral(const PolyKernel& k_xy);
/// M[K] from R^{cols} into L2^{rows}[x,y], K in (x, y).
BlockPiOp plane_extension(const PolyKernel& k_xy);

}  // namespace pie
