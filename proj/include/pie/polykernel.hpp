#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pie {

/// Spatial variables a kernel may depend on. x, y are the output coordinates,
/// theta, eta the matching integration coordinates. nu, mu are scratch
/// variables used only while composing operators (the middle integration
/// variable in x resp. y); they never survive in a finished kernel.
enum class Var : std::uint8_t { X = 0, Y = 1, Theta = 2, Eta = 3, Nu = 4, Mu = 5 };

inline constexpr int kNumVars = 6;
inline constexpr int kMaxDegreePerVar = 40;

std::string var_name(Var v);

using Exponent = std::array<std::uint8_t, kNumVars>;

int total_degree(const Exponent& e);

/// Graded lexicographic order over (x, y, theta, eta, nu, mu).
struct GradedLex {
  bool operator()(const Exponent& a, const Exponent& b) const;
};

/// A substitution target or integration limit: a constant or another variable.
struct Limit {
  bool is_var = false;
  Var var = Var::X;
  double value = 0.0;

  static Limit constant(double c) { return {false, Var::X, c}; }
  static Limit variable(Var v) { return {true, v, 0.0}; }
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Point = std::array<double, kNumVars>;

/// Matrix-valued polynomial in the variables of Var, stored sparsely as a map
/// from multi-degree to coefficient matrix. Zero coefficients are never
/// stored, so two kernels compare equal iff their maps agree.
class PolyKernel {
 public:
  using TermMap = std::map<Exponent, Eigen::MatrixXd, GradedLex>;

  PolyKernel() : PolyKernel(1, 1) {}
  PolyKernel(int rows, int cols);

  static PolyKernel zero(int rows, int cols) { return PolyKernel(rows, cols); }
  static PolyKernel constant(const Eigen::MatrixXd& c);
  static PolyKernel scalar(double c) { return constant(Eigen::MatrixXd::Constant(1, 1, c)); }
  static PolyKernel identity(int n) { return constant(Eigen::MatrixXd::Identity(n, n)); }
  /// coeff * prod_v v^e[v]
  static PolyKernel monomial(const Exponent& e, const Eigen::MatrixXd& coeff);
  static PolyKernel monomial(const Exponent& e, double coeff = 1.0);
  /// The single variable v as a 1x1 kernel.
  static PolyKernel variable(Var v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  std::size_t num_terms() const { return terms_.size(); }

  /// Adds coeff to the coefficient of e, dropping the term if it cancels.
  void add_term(const Exponent& e, const Eigen::MatrixXd& coeff);

  /// Variables with a positive exponent in some stored term.
  std::vector<Var> var_set() const;
  bool depends_on(Var v) const;
  int degree(Var v) const;
  int total_degree() const;

  Eigen::MatrixXd eval(const Point& p) const;
  double max_abs_coeff() const;

  PolyKernel operator+(const PolyKernel& o) const;
  PolyKernel operator-(const PolyKernel& o) const;
  PolyKernel operator-() const;
  PolyKernel& operator+=(const PolyKernel& o);
  PolyKernel& operator-=(const PolyKernel& o);
  PolyKernel operator*(double s) const;
  /// Polynomial matrix product.
  PolyKernel operator*(const PolyKernel& o) const;

  PolyKernel transpose() const;
  /// Left/right multiplication by constant matrices.
  PolyKernel left_mul(const Eigen::MatrixXd& m) const;
  PolyKernel right_mul(const Eigen::MatrixXd& m) const;

  PolyKernel diff(Var v) const;
  PolyKernel subs(Var v, const Limit& value) const;
  /// Definite integral over v between the given limits.
  PolyKernel integrate(Var v, const Limit& lower, const Limit& upper) const;
  /// Simultaneous variable renaming; perm[i] is the new variable for variable i.
  PolyKernel rename(const std::array<Var, kNumVars>& perm) const;
  PolyKernel swap_vars(Var a, Var b) const;

  PolyKernel block(int r0, int c0, int nr, int nc) const;
  void set_block(int r0, int c0, const PolyKernel& b);

  /// Drops coefficient entries with magnitude <= tol.
  PolyKernel pruned(double tol) const;
  bool approx_equal(const PolyKernel& o, double tol) const;

  bool operator==(const PolyKernel& o) const;

  std::string to_string() const;

 private:
  int rows_;
  int cols_;
  TermMap terms_;
};

PolyKernel operator*(double s, const PolyKernel& p);

PolyKernel poly_add(const PolyKernel& a, const PolyKernel& b);
PolyKernel poly_mul(const PolyKernel& a, const PolyKernel& b);
PolyKernel poly_int(const PolyKernel& p, Var v, const Limit& lower, const Limit& upper);
PolyKernel poly_diff(const PolyKernel& p, Var v);
PolyKernel poly_subs(const PolyKernel& p, Var v, const Limit& value);

/// Deterministically ordered monomial list over a set of variables.
class MonomialBasis {
 public:
  MonomialBasis() = default;
  /// All monomials in `vars` with total degree <= degree, graded lex order.
  MonomialBasis(std::vector<Var> vars, int degree);

  const std::vector<Var>& variables() const { return vars_; }
  int degree() const { return degree_; }
  std::size_t size() const { return exps_.size(); }
  const std::vector<Exponent>& exponents() const { return exps_; }
  const Exponent& operator[](std::size_t i) const { return exps_[i]; }

  /// Column kernel (size*n) x n with entries mono_i * I_n.
  PolyKernel as_kernel(int n = 1) const;
  /// Same basis with variables renamed.
  MonomialBasis renamed(const std::array<Var, kNumVars>& perm) const;

 private:
  std::vector<Var> vars_;
  int degree_ = 0;
  std::vector<Exponent> exps_;
};

/// Orthonormal shifted Legendre polynomials on [0,1] in variable v,
/// degrees 0..degree.
std::vector<PolyKernel> legendre_basis(int degree, Var v = Var::X);

/// Tensor-product basis phi_{i*(d+1)+j}(x,y) = l_i(x) l_j(y).
std::vector<PolyKernel> legendre_basis_2d(int degree);

std::array<Var, kNumVars> identity_perm();

}  // namespace pie
