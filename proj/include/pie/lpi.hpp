#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pie/pde_model.hpp"
#include "pie/piop.hpp"
#include "pie/sdp.hpp"

namespace pie {

/// Raised when the positivity basis cannot reach the degree of the operator
/// it has to match; carries the smallest sufficient degree.
class DegreeError : public std::invalid_argument {
 public:
  DegreeError(const std::string& msg, int minimal_degree)
      : std::invalid_argument(msg), minimal_degree_(minimal_degree) {}
  int minimal_degree() const { return minimal_degree_; }

 private:
  int minimal_degree_;
};

/// Operator-valued affine expression op0 + sum_k delta_k op_k in scalar
/// decision variables delta.
struct AffinePiOp {
  BlockPiOp constant;
  std::map<int, BlockPiOp> terms;

  AffinePiOp() = default;
  explicit AffinePiOp(BlockPiOp c) : constant(std::move(c)) {}

  const SpaceSignature& out_sig() const { return constant.out_sig(); }
  const SpaceSignature& in_sig() const { return constant.in_sig(); }

  AffinePiOp operator+(const AffinePiOp& o) const;
  AffinePiOp operator-(const AffinePiOp& o) const;
  AffinePiOp operator*(double s) const;
  AffinePiOp adjoint() const;
  BlockPiOp evaluate(const Eigen::VectorXd& delta) const;
  int max_total_degree() const;
};

AffinePiOp compose(const BlockPiOp& a, const AffinePiOp& b);
AffinePiOp compose(const AffinePiOp& a, const BlockPiOp& b);
AffinePiOp embed(const AffinePiOp& op, SpaceSignature out_sig, std::array<int, 4> out_offset,
                 SpaceSignature in_sig, std::array<int, 4> in_offset);

/// How one row of a Gram basis acts in a single coordinate.
///   Mult  : v(x) -> x^a v(x)
///   Lower : v -> int_0^x x^a theta^c v(theta)
///   Upper : v -> int_x^1 x^a theta^c v(theta)
///   Full  : v -> int_0^1 theta^c v(theta), the row output lacks the coordinate
enum class Mode : std::uint8_t { Mult, Lower, Upper, Full };

struct CoordFactor {
  Mode mode = Mode::Full;
  int out_pow = 0;
  int in_pow = 0;
  bool operator==(const CoordFactor&) const = default;
};

/// One scalar row of a Gram basis Z acting on R^n0 + L2^n2[x,y]. A real
/// input row returns the component c_comp; otherwise the row acts on
/// component v_comp through the per-coordinate factors. A row whose factors
/// are both Full returns a real number, otherwise a function of (x, y) that
/// is constant along a Full coordinate. With pre >= 0 the row acts on the
/// image of the basis pre-operator with that index instead of on v.
struct GramRow {
  bool real_input = false;
  int comp = 0;
  CoordFactor x;
  CoordFactor y;
  int pre = -1;

  bool real_output() const { return real_input || (x.mode == Mode::Full && y.mode == Mode::Full); }
  int total_degree() const { return x.out_pow + x.in_pow + y.out_pow + y.in_pow; }
};

/// Weight w >= 0 on the unit square placed between the rows of a Gram basis:
/// 1, x(1 - x) or y(1 - y).
enum class DomainWeight : std::uint8_t { One, X, Y };

/// Basis Z such that Z^* M[w G] Z is positive semidefinite whenever G is.
/// M[w G] on R^a + L2^b[x,y] couples the real and function parts through the
/// w-weighted integral over the unit square.
class GramBasis {
 public:
  GramBasis() = default;
  explicit GramBasis(SpaceSignature in_sig, DomainWeight w = DomainWeight::One) : in_sig_(in_sig), weight_(w) {}

  const SpaceSignature& in_sig() const { return in_sig_; }
  DomainWeight weight() const { return weight_; }
  const std::vector<GramRow>& rows() const { return rows_; }
  int size() const { return static_cast<int>(rows_.size()); }
  void add_row(const GramRow& r);
  /// Registers an operator on in_sig() that plane rows may be composed with;
  /// returns its index.
  int add_pre(const BlockPiOp& op);
  const std::vector<BlockPiOp>& pre() const { return pre_; }
  void set_pre(int row, int pre);
  /// Removes rows with index >= first that satisfy pred.
  void drop_rows_after(int first, const std::function<bool(const GramRow&)>& pred);

  /// Z_i as an operator into R (real output) or L2[x,y].
  BlockPiOp row_op(int i) const;
  /// Z_i^* M[e_i e_j^T] Z_j from closed-form kernels.
  BlockPiOp pair_op(int i, int j) const;
  /// Z_i^* M[e_i e_j^T] Z_j through the general operator algebra.
  BlockPiOp pair_op_reference(int i, int j) const;
  /// Z^* M[G] Z for symmetric G.
  BlockPiOp gram_op(const Eigen::MatrixXd& G) const;
  /// Largest degree in (x, theta) and in (y, eta) of any diagonal pair kernel.
  std::array<int, 2> max_pair_degree() const;

 private:
  BlockPiOp base_pair(int i, int j) const;

  SpaceSignature in_sig_;
  DomainWeight weight_ = DomainWeight::One;
  std::vector<GramRow> rows_;
  std::vector<BlockPiOp> pre_;
  std::vector<BlockPiOp> pre_adj_;
};

/// Multiplier rows in (x,y) and full-integral rows in (theta,eta), each of
/// total degree <= d, for every component of L2^n[x,y].
GramBasis separable_basis(int n, int d);

/// Which 2D kernel families an operator contains; used to shape Z2.
struct KernelStructure {
  bool mult_mult = false;
  bool mult_int = false;  // Mult in x, Lower/Upper in y
  bool int_mult = false;
  bool int_int = false;
  bool real_plane = false;  // terms between R and L2[x,y]
  /// Largest kernel degree in (x, theta) and in (y, eta).
  std::array<int, 2> max_degree{0, 0};
};

/// Largest kernel degree of op in (x, theta) and in (y, eta).
std::array<int, 2> coord_degrees(const BlockPiOp& op);
KernelStructure kernel_structure(const AffinePiOp& op);

/// Gram basis for matching an operator of the given structure: identity rows
/// for the real part, then one family of plane rows per kernel family
/// present, with degree <= d in each coordinate (d + 1 for full integral
/// rows).
GramBasis structured_basis(const SpaceSignature& sig, const KernelStructure& s, int d);

/// Gram basis for PIEs derived from a PDE with fundamental state operator T.
/// Plane rows act on d_x^a d_y^b T v for the half orders (a, b) of the
/// derivatives in state_orders: multiplier and full integral rows on each,
/// plus edge trace rows (Full along a differentiated coordinate). Unlike
/// rows acting on v directly, every row is dominated by the energy of u, so
/// the resulting LMI keeps an interior.
GramBasis state_basis(const SpaceSignature& sig, const BlockPiOp& T,
                      const std::vector<std::array<int, 2>>& state_orders, int d);

/// Multiplier rows of degree <= d - 1 on the same pre-operators as
/// state_basis, one basis per domain weight x(1 - x) and y(1 - y). They let
/// the multiplier part of the certificate be nonnegative on the unit square
/// only, rather than on the whole plane. Empty for d = 0.
std::vector<GramBasis> weighted_state_bases(const SpaceSignature& sig, const BlockPiOp& T,
                                            const std::vector<std::array<int, 2>>& state_orders, int d);

struct LpiOptions {
  int d1 = 1;
  int d2 = 2;
  int d3 = 1;
  double eps = 1e-3;
  /// Fixed bound instead of minimizing gamma.
  std::optional<double> gamma;
  /// Relative threshold below which kernel coefficients count as zero.
  double coeff_tol = 1e-11;
  bool verbose = false;
};

/// Canonical kernel coefficient of a self-adjoint block operator.
struct KernelKey {
  Space out;
  Space in;
  Rel rx;
  Rel ry;
  Exponent exp;
  int row;
  int col;
  auto operator<=>(const KernelKey&) const = default;
};

/// Coefficients of op on canonical keys only: for a self-adjoint operator the
/// remaining coefficients follow from these by symmetry.
std::map<KernelKey, double> canonical_coefficients(const BlockPiOp& op);

/// Assembled LMI together with everything needed to read the solution back.
struct LpiProblem {
  SdpProblem sdp;
  GramBasis z1;
  /// Positivity bases of the matching identity, one Gram block each.
  std::vector<GramBasis> z2;
  std::vector<BlockPiOp> w_basis;
  /// Decision variable layout: [P gram entries (upper triangle), W, gamma].
  int num_p_vars = 0;
  int gamma_var = -1;
  /// Index of gamma among the SDP free variables, -1 when fixed.
  int gamma_free = -1;
  double gamma_fixed = 0.0;
  double eps = 0.0;
  bool estimator = true;
  AffinePiOp lhs;
  std::size_t rows_total = 0;
  std::size_t rows_dropped = 0;
};

/// LPI for H-infinity optimal estimation of a PIE: minimize gamma subject to
/// P = Z1^* M[P] Z1 + eps I with P psd and the 3x3 block operator equal to
/// sum_k Z2_k^* M[w_k Q_k] Z2_k with every Q_k nsd. With a fixed gamma the
/// total trace of the Gram blocks is minimized instead, which keeps the
/// otherwise homogeneous feasibility problem bounded.
LpiProblem assemble_estimator_lmi(const PieSystem& pie, const LpiOptions& opt = {});
/// L2-gain analysis LPI (no observer gain).
LpiProblem assemble_gain_analysis_lmi(const PieSystem& pie, const LpiOptions& opt = {});

/// Upper-triangle index of P gram entry (i, j), i <= j.
int upper_index(int n, int i, int j);

struct LpiSolution {
  double gamma = 0.0;
  Eigen::MatrixXd P_gram;
  /// One nsd Gram matrix per basis in LpiProblem::z2.
  std::vector<Eigen::MatrixXd> Q_gram;
  Eigen::VectorXd w;
  Eigen::VectorXd delta;
  BlockPiOp P;
  BlockPiOp W;
};

class ExtractionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rebuilds gamma, P and W from a solved LMI. Refuses solutions whose status
/// is not optimal or whose residuals exceed max_residual.
LpiSolution extract_solution(const LpiProblem& prob, const SdpSolution& raw, double max_residual = 1e-6);

/// LHS(delta) - sum_k Z2_k^* M[w_k Q_k] Z2_k for a candidate solution.
BlockPiOp matching_residual(const LpiProblem& prob, const LpiSolution& sol);

}  // namespace pie
