#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <utility>

#include "pie/polykernel.hpp"

namespace pie {

/// Components of the direct sum R^n0 + L2^nx[x] + L2^ny[y] + L2^n2[x,y].
enum class Space : std::uint8_t { R = 0, X = 1, Y = 2, XY = 3 };

inline constexpr std::array<Space, 4> kSpaces = {Space::R, Space::X, Space::Y, Space::XY};

inline bool has_x(Space s) { return s == Space::X || s == Space::XY; }
inline bool has_y(Space s) { return s == Space::Y || s == Space::XY; }
std::string space_name(Space s);

struct SpaceSignature {
  int n0 = 0;
  int nx = 0;
  int ny = 0;
  int n2 = 0;

  int dim(Space s) const;
  int& dim(Space s);
  bool empty() const { return n0 == 0 && nx == 0 && ny == 0 && n2 == 0; }
  bool operator==(const SpaceSignature&) const = default;

  static SpaceSignature real(int n) { return {n, 0, 0, 0}; }
  static SpaceSignature plane(int n) { return {0, 0, 0, n}; }
};

/// How one spatial coordinate of the output relates to the same coordinate of
/// the input, for a single kernel term.
///   Mult  : output and input both carry the coordinate; K(x) v(x)
///   Lower : int_0^x K(x,theta) v(theta) dtheta
///   Upper : int_x^1 K(x,theta) v(theta) dtheta
///   Ext   : only the output carries it; K(x) multiplies a function without x
///   Full  : only the input carries it; int_0^1 K(theta) v(theta) dtheta
///   None  : neither side carries it
/// For the y coordinate read y/eta for x/theta.
enum class Rel : std::uint8_t { Mult = 0, Lower, Upper, Ext, Full, None };

std::string rel_name(Rel r);

using RelPair = std::pair<Rel, Rel>;
using Block = std::map<RelPair, PolyKernel>;

class StructureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SignatureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Partial-integral operator between two direct sums of the form
/// R^n0 + L2^nx[x] + L2^ny[y] + L2^n2[x,y]. Every (output space, input space)
/// block is a sum of kernel terms indexed by the relation in x and in y.
/// The 2D -> 2D block therefore holds the nine kernels R00..R22 (Mult, Lower,
/// Upper in each coordinate) and the mixed blocks hold the 1D and 0D families.
class BlockPiOp {
 public:
  BlockPiOp() = default;
  BlockPiOp(SpaceSignature out_sig, SpaceSignature in_sig);

  static BlockPiOp zero(SpaceSignature out_sig, SpaceSignature in_sig) {
    return BlockPiOp(out_sig, in_sig);
  }
  static BlockPiOp identity(SpaceSignature sig);
  /// M[K] on L2^n[x,y] with K(x,y) n x n.
  static BlockPiOp multiplier(const PolyKernel& k);
  /// Single 2D -> 2D term.
  static BlockPiOp plane_term(Rel rx, Rel ry, const PolyKernel& k);

  const SpaceSignature& out_sig() const { return out_sig_; }
  const SpaceSignature& in_sig() const { return in_sig_; }

  const Block& block(Space out, Space in) const;
  /// Kernel for one term; a zero kernel of the right shape if absent.
  PolyKernel term(Space out, Space in, Rel rx, Rel ry) const;
  void add_term(Space out, Space in, Rel rx, Rel ry, const PolyKernel& k);

  bool is_zero() const;
  std::size_t num_terms() const;
  int max_total_degree() const;
  double max_abs_coeff() const;

  BlockPiOp pruned(double tol) const;
  bool approx_equal(const BlockPiOp& o, double tol) const;
  bool operator==(const BlockPiOp& o) const;

  BlockPiOp operator+(const BlockPiOp& o) const;
  BlockPiOp operator-(const BlockPiOp& o) const;
  BlockPiOp operator*(double s) const;
  BlockPiOp& operator+=(const BlockPiOp& o);

  /// Constant left/right matrix products on one space component.
  BlockPiOp left_mul(Space out, const Eigen::MatrixXd& m) const;

  std::string describe() const;

 private:
  SpaceSignature out_sig_;
  SpaceSignature in_sig_;
  std::array<std::array<Block, 4>, 4> blocks_;
};

/// Element of a direct sum, each component a column kernel in the variables
/// of its space (none, x, y, or x and y).
struct FunctionVector {
  SpaceSignature sig;
  std::array<PolyKernel, 4> comp;

  FunctionVector() = default;
  explicit FunctionVector(SpaceSignature s);
  static FunctionVector plane(const PolyKernel& f);

  PolyKernel& operator[](Space s) { return comp[static_cast<int>(s)]; }
  const PolyKernel& operator[](Space s) const { return comp[static_cast<int>(s)]; }

  bool approx_equal(const FunctionVector& o, double tol) const;
  FunctionVector operator-(const FunctionVector& o) const;
  double max_abs_coeff() const;
};

/// Allowed kernel variables for a relation in the x (resp. y) coordinate.
bool rel_allowed(Rel r, bool out_has, bool in_has);

BlockPiOp pi_add(const BlockPiOp& a, const BlockPiOp& b);
BlockPiOp pi_scale(const BlockPiOp& a, double s);
/// a o b
BlockPiOp pi_compose(const BlockPiOp& a, const BlockPiOp& b);
BlockPiOp pi_adjoint(const BlockPiOp& op);
/// Exact symbolic application to a polynomial function vector.
FunctionVector pi_apply(const BlockPiOp& op, const FunctionVector& f);

/// d/dx (axis = Var::X) or d/dy (axis = Var::Y) composed with op, for ops
/// whose output lies in spaces carrying that coordinate. Throws StructureError
/// when a multiplier term would need differentiating.
BlockPiOp differentiate(const BlockPiOp& op, Var axis);

/// d_x^k d_y^l o T for T with vanishing R00, R0j, Ri0 on the 2D block.
BlockPiOp diff_compose(const BlockPiOp& t, int k, int l);

enum class TraceAxis { X, Y, Both };

/// Boundary trace composed with op: x = k (axis X), y = l (axis Y), or the
/// corner (k, l) (axis Both). Throws StructureError when the trace of a
/// multiplier term would be required.
BlockPiOp dirac_compose(const BlockPiOp& op, TraceAxis axis, int k, int l = 0);

/// Concatenate operators with identical input signatures along the output of
/// a single space: rows of `parts` are stacked in order.
BlockPiOp vstack(const std::vector<BlockPiOp>& parts);

/// Same operator viewed with enlarged signatures; the op's components are
/// placed at the given row/column offsets inside each space.
BlockPiOp embed(const BlockPiOp& op, SpaceSignature out_sig, std::array<int, 4> out_offset,
                SpaceSignature in_sig, std::array<int, 4> in_offset);

/// Numerical evaluation of (op f) at a point (x, y) using Gauss-Legendre
/// quadrature with `order` nodes per subinterval. f is given per space as a
/// callable returning a column vector. Independent of the symbolic routines.
using SampledFunction = std::function<Eigen::VectorXd(Space, double, double)>;
Eigen::VectorXd pi_apply_numeric(const BlockPiOp& op, const SampledFunction& f, Space out_space,
                                 double x, double y, int order = 16);

/// Exact L2 / Euclidean inner product on a direct sum of polynomial vectors.
double inner_product(const FunctionVector& a, const FunctionVector& b);

}  // namespace pie
