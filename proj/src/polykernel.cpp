#include "pie/polykernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pie {

namespace {

constexpr const char* kVarNames[kNumVars] = {"x", "y", "theta", "eta", "nu", "mu"};

int idx(Var v) { return static_cast<int>(v); }

void check_degree(const Exponent& e) {
  for (auto d : e) {
    if (d > kMaxDegreePerVar) {
      throw std::overflow_error("PolyKernel: per-variable degree bound exceeded");
    }
  }
}

double ipow(double base, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

std::string var_name(Var v) { return kVarNames[idx(v)]; }

int total_degree(const Exponent& e) {
  int s = 0;
  for (auto d : e) s += d;
  return s;
}

bool GradedLex::operator()(const Exponent& a, const Exponent& b) const {
  const int da = total_degree(a);
  const int db = total_degree(b);
  if (da != db) return da < db;
  // Higher power of an earlier variable sorts first within a degree.
  for (int i = 0; i < kNumVars; ++i) {
    if (a[i] != b[i]) return a[i] > b[i];
  }
  return false;
}

std::array<Var, kNumVars> identity_perm() {
  return {Var::X, Var::Y, Var::Theta, Var::Eta, Var::Nu, Var::Mu};
}

PolyKernel::PolyKernel(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw DimensionError("PolyKernel: negative dimension");
}

PolyKernel PolyKernel::constant(const Eigen::MatrixXd& c) {
  PolyKernel p(static_cast<int>(c.rows()), static_cast<int>(c.cols()));
  p.add_term(Exponent{}, c);
  return p;
}

PolyKernel PolyKernel::monomial(const Exponent& e, const Eigen::MatrixXd& coeff) {
  PolyKernel p(static_cast<int>(coeff.rows()), static_cast<int>(coeff.cols()));
  p.add_term(e, coeff);
  return p;
}

PolyKernel PolyKernel::monomial(const Exponent& e, double coeff) {
  return monomial(e, Eigen::MatrixXd::Constant(1, 1, coeff));
}

PolyKernel PolyKernel::variable(Var v) {
  Exponent e{};
  e[idx(v)] = 1;
  return monomial(e, 1.0);
}

void PolyKernel::add_term(const Exponent& e, const Eigen::MatrixXd& coeff) {
  if (coeff.rows() != rows_ || coeff.cols() != cols_) {
    throw DimensionError("PolyKernel::add_term: coefficient shape mismatch");
  }
  check_degree(e);
  auto it = terms_.find(e);
  if (it == terms_.end()) {
    if (!coeff.isZero(0.0)) terms_.emplace(e, coeff);
    return;
  }
  it->second += coeff;
  if (it->second.isZero(0.0)) terms_.erase(it);
}

std::vector<Var> PolyKernel::var_set() const {
  std::vector<Var> out;
  for (int v = 0; v < kNumVars; ++v) {
    if (depends_on(static_cast<Var>(v))) out.push_back(static_cast<Var>(v));
  }
  return out;
}

bool PolyKernel::depends_on(Var v) const { return degree(v) > 0; }

int PolyKernel::degree(Var v) const {
  int d = 0;
  for (const auto& [e, c] : terms_) d = std::max(d, static_cast<int>(e[idx(v)]));
  return d;
}

int PolyKernel::total_degree() const {
  int d = 0;
  for (const auto& [e, c] : terms_) d = std::max(d, pie::total_degree(e));
  return d;
}

Eigen::MatrixXd PolyKernel::eval(const Point& p) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows_, cols_);
  for (const auto& [e, c] : terms_) {
    double m = 1.0;
    for (int i = 0; i < kNumVars; ++i) m *= ipow(p[i], e[i]);
    out += m * c;
  }
  return out;
}

double PolyKernel::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& [e, c] : terms_) m = std::max(m, c.cwiseAbs().maxCoeff());
  return m;
}

PolyKernel& PolyKernel::operator+=(const PolyKernel& o) {
  if (o.rows_ != rows_ || o.cols_ != cols_) {
    throw DimensionError("poly_add: dimension mismatch");
  }
  for (const auto& [e, c] : o.terms_) add_term(e, c);
  return *this;
}

PolyKernel& PolyKernel::operator-=(const PolyKernel& o) {
  if (o.rows_ != rows_ || o.cols_ != cols_) {
    throw DimensionError("poly_add: dimension mismatch");
  }
  for (const auto& [e, c] : o.terms_) add_term(e, -c);
  return *this;
}

PolyKernel PolyKernel::operator+(const PolyKernel& o) const {
  PolyKernel r = *this;
  r += o;
  return r;
}

PolyKernel PolyKernel::operator-(const PolyKernel& o) const {
  PolyKernel r = *this;
  r -= o;
  return r;
}

PolyKernel PolyKernel::operator-() const { return *this * -1.0; }

PolyKernel PolyKernel::operator*(double s) const {
  PolyKernel r(rows_, cols_);
  if (s == 0.0) return r;
  for (const auto& [e, c] : terms_) r.terms_.emplace(e, s * c);
  return r;
}

PolyKernel operator*(double s, const PolyKernel& p) { return p * s; }

PolyKernel PolyKernel::operator*(const PolyKernel& o) const {
  if (cols_ != o.rows_) throw DimensionError("poly_mul: inner dimension mismatch");
  PolyKernel r(rows_, o.cols_);
  const bool scalar = rows_ == 1 && cols_ == 1 && o.cols_ == 1;
  for (const auto& [ea, ca] : terms_) {
    for (const auto& [eb, cb] : o.terms_) {
      Exponent e;
      for (int i = 0; i < kNumVars; ++i) e[i] = static_cast<std::uint8_t>(ea[i] + eb[i]);
      if (scalar) {
        r.add_term(e, Eigen::MatrixXd::Constant(1, 1, ca(0, 0) * cb(0, 0)));
      } else {
        r.add_term(e, ca * cb);
      }
    }
  }
  return r;
}

PolyKernel PolyKernel::transpose() const {
  PolyKernel r(cols_, rows_);
  for (const auto& [e, c] : terms_) r.terms_.emplace(e, c.transpose());
  return r;
}

PolyKernel PolyKernel::left_mul(const Eigen::MatrixXd& m) const {
  if (m.cols() != rows_) throw DimensionError("left_mul: dimension mismatch");
  PolyKernel r(static_cast<int>(m.rows()), cols_);
  for (const auto& [e, c] : terms_) r.add_term(e, m * c);
  return r;
}

PolyKernel PolyKernel::right_mul(const Eigen::MatrixXd& m) const {
  if (m.rows() != cols_) throw DimensionError("right_mul: dimension mismatch");
  PolyKernel r(rows_, static_cast<int>(m.cols()));
  for (const auto& [e, c] : terms_) r.add_term(e, c * m);
  return r;
}

PolyKernel PolyKernel::diff(Var v) const {
  PolyKernel r(rows_, cols_);
  const int i = idx(v);
  for (const auto& [e, c] : terms_) {
    if (e[i] == 0) continue;
    Exponent ne = e;
    ne[i] -= 1;
    r.add_term(ne, static_cast<double>(e[i]) * c);
  }
  return r;
}

PolyKernel PolyKernel::subs(Var v, const Limit& value) const {
  const int i = idx(v);
  if (value.is_var && value.var == v) return *this;
  PolyKernel r(rows_, cols_);
  for (const auto& [e, c] : terms_) {
    Exponent ne = e;
    ne[i] = 0;
    if (value.is_var) {
      ne[idx(value.var)] = static_cast<std::uint8_t>(ne[idx(value.var)] + e[i]);
      r.add_term(ne, c);
    } else {
      const double f = ipow(value.value, e[i]);
      if (f != 0.0) r.add_term(ne, f * c);
    }
  }
  return r;
}

PolyKernel PolyKernel::integrate(Var v, const Limit& lower, const Limit& upper) const {
  if ((lower.is_var && lower.var == v) || (upper.is_var && upper.var == v)) {
    throw std::invalid_argument("poly_int: limit depends on the integration variable");
  }
  const int i = idx(v);
  PolyKernel anti(rows_, cols_);
  for (const auto& [e, c] : terms_) {
    Exponent ne = e;
    ne[i] = static_cast<std::uint8_t>(e[i] + 1);
    anti.add_term(ne, c / static_cast<double>(ne[i]));
  }
  return anti.subs(v, upper) - anti.subs(v, lower);
}

PolyKernel PolyKernel::rename(const std::array<Var, kNumVars>& perm) const {
  PolyKernel r(rows_, cols_);
  for (const auto& [e, c] : terms_) {
    Exponent ne{};
    for (int i = 0; i < kNumVars; ++i) {
      const int j = idx(perm[i]);
      ne[j] = static_cast<std::uint8_t>(ne[j] + e[i]);
    }
    r.add_term(ne, c);
  }
  return r;
}

PolyKernel PolyKernel::swap_vars(Var a, Var b) const {
  auto perm = identity_perm();
  perm[idx(a)] = b;
  perm[idx(b)] = a;
  return rename(perm);
}

PolyKernel PolyKernel::block(int r0, int c0, int nr, int nc) const {
  if (r0 < 0 || c0 < 0 || r0 + nr > rows_ || c0 + nc > cols_) {
    throw DimensionError("PolyKernel::block: out of range");
  }
  PolyKernel r(nr, nc);
  for (const auto& [e, c] : terms_) r.add_term(e, c.block(r0, c0, nr, nc));
  return r;
}

void PolyKernel::set_block(int r0, int c0, const PolyKernel& b) {
  if (r0 < 0 || c0 < 0 || r0 + b.rows_ > rows_ || c0 + b.cols_ > cols_) {
    throw DimensionError("PolyKernel::set_block: out of range");
  }
  // Clear the target window, then add the new block.
  for (auto it = terms_.begin(); it != terms_.end();) {
    it->second.block(r0, c0, b.rows_, b.cols_).setZero();
    if (it->second.isZero(0.0)) {
      it = terms_.erase(it);
    } else {
      ++it;
    }
  }
  for (const auto& [e, c] : b.terms_) {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(rows_, cols_);
    full.block(r0, c0, b.rows_, b.cols_) = c;
    add_term(e, full);
  }
}

PolyKernel PolyKernel::pruned(double tol) const {
  PolyKernel r(rows_, cols_);
  for (const auto& [e, c] : terms_) {
    Eigen::MatrixXd m = c;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (std::abs(m(i)) <= tol) m(i) = 0.0;
    }
    r.add_term(e, m);
  }
  return r;
}

bool PolyKernel::approx_equal(const PolyKernel& o, double tol) const {
  if (rows_ != o.rows_ || cols_ != o.cols_) return false;
  return (*this - o).max_abs_coeff() <= tol;
}

bool PolyKernel::operator==(const PolyKernel& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_ || terms_.size() != o.terms_.size()) return false;
  auto a = terms_.begin();
  auto b = o.terms_.begin();
  for (; a != terms_.end(); ++a, ++b) {
    if (a->first != b->first || a->second != b->second) return false;
  }
  return true;
}

std::string PolyKernel::to_string() const {
  std::ostringstream os;
  if (terms_.empty()) return "0";
  bool first = true;
  for (const auto& [e, c] : terms_) {
    if (!first) os << " + ";
    first = false;
    if (c.size() == 1) {
      os << c(0, 0);
    } else {
      os << "[" << c.format(Eigen::IOFormat(6, 0, ",", ";")) << "]";
    }
    for (int i = 0; i < kNumVars; ++i) {
      if (e[i] == 0) continue;
      os << "*" << kVarNames[i];
      if (e[i] > 1) os << "^" << static_cast<int>(e[i]);
    }
  }
  return os.str();
}

PolyKernel poly_add(const PolyKernel& a, const PolyKernel& b) { return a + b; }
PolyKernel poly_mul(const PolyKernel& a, const PolyKernel& b) { return a * b; }
PolyKernel poly_int(const PolyKernel& p, Var v, const Limit& lower, const Limit& upper) {
  return p.integrate(v, lower, upper);
}
PolyKernel poly_diff(const PolyKernel& p, Var v) { return p.diff(v); }
PolyKernel poly_subs(const PolyKernel& p, Var v, const Limit& value) { return p.subs(v, value); }

MonomialBasis::MonomialBasis(std::vector<Var> vars, int degree)
    : vars_(std::move(vars)), degree_(degree) {
  if (degree < 0) throw std::invalid_argument("MonomialBasis: negative degree");
  // Enumerate exponent tuples over vars_ with total degree <= degree.
  std::vector<Exponent> all;
  Exponent cur{};
  auto rec = [&](auto&& self, std::size_t k, int remaining) -> void {
    if (k == vars_.size()) {
      all.push_back(cur);
      return;
    }
    for (int d = 0; d <= remaining; ++d) {
      cur[idx(vars_[k])] = static_cast<std::uint8_t>(d);
      self(self, k + 1, remaining - d);
    }
    cur[idx(vars_[k])] = 0;
  };
  rec(rec, 0, degree);
  std::sort(all.begin(), all.end(), GradedLex{});
  exps_ = std::move(all);
}

PolyKernel MonomialBasis::as_kernel(int n) const {
  const int p = static_cast<int>(exps_.size());
  PolyKernel k(p * n, n);
  for (int i = 0; i < p; ++i) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p * n, n);
    c.block(i * n, 0, n, n).setIdentity();
    k.add_term(exps_[i], c);
  }
  return k;
}

MonomialBasis MonomialBasis::renamed(const std::array<Var, kNumVars>& perm) const {
  MonomialBasis b;
  b.degree_ = degree_;
  for (Var v : vars_) b.vars_.push_back(perm[idx(v)]);
  for (const auto& e : exps_) {
    Exponent ne{};
    for (int i = 0; i < kNumVars; ++i) ne[idx(perm[i])] = static_cast<std::uint8_t>(ne[idx(perm[i])] + e[i]);
    b.exps_.push_back(ne);
  }
  return b;
}

std::vector<PolyKernel> legendre_basis(int degree, Var v) {
  if (degree < 0) throw std::invalid_argument("legendre_basis: negative degree");
  // Shifted Legendre via the three-term recurrence in s = 2v - 1, then
  // normalized by sqrt(2k+1).
  std::vector<PolyKernel> p;
  const PolyKernel s = PolyKernel::variable(v) * 2.0 - PolyKernel::scalar(1.0);
  p.push_back(PolyKernel::scalar(1.0));
  if (degree >= 1) p.push_back(s);
  for (int k = 1; k < degree; ++k) {
    const double a = (2.0 * k + 1.0) / (k + 1.0);
    const double b = static_cast<double>(k) / (k + 1.0);
    p.push_back(s * p[k] * a - p[k - 1] * b);
  }
  for (int k = 0; k <= degree; ++k) p[k] = p[k] * std::sqrt(2.0 * k + 1.0);
  return p;
}

std::vector<PolyKernel> legendre_basis_2d(int degree) {
  const auto lx = legendre_basis(degree, Var::X);
  const auto ly = legendre_basis(degree, Var::Y);
  std::vector<PolyKernel> out;
  for (const auto& a : lx) {
    for (const auto& b : ly) out.push_back(a * b);
  }
  return out;
}

}  // namespace pie
