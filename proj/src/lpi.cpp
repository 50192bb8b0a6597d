#include "pie/lpi.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <Eigen/Sparse>

namespace pie {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// AffinePiOp

AffinePiOp AffinePiOp::operator+(const AffinePiOp& o) const {
  AffinePiOp r(constant + o.constant);
  r.terms = terms;
  for (const auto& [k, op] : o.terms) {
    auto it = r.terms.find(k);
    if (it == r.terms.end()) {
      r.terms.emplace(k, op);
    } else {
      it->second += op;
    }
  }
  return r;
}

AffinePiOp AffinePiOp::operator*(double s) const {
  AffinePiOp r(constant * s);
  for (const auto& [k, op] : terms) r.terms.emplace(k, op * s);
  return r;
}

AffinePiOp AffinePiOp::operator-(const AffinePiOp& o) const { return *this + o * -1.0; }

AffinePiOp AffinePiOp::adjoint() const {
  AffinePiOp r(pi_adjoint(constant));
  for (const auto& [k, op] : terms) r.terms.emplace(k, pi_adjoint(op));
  return r;
}

BlockPiOp AffinePiOp::evaluate(const VectorXd& delta) const {
  BlockPiOp r = constant;
  for (const auto& [k, op] : terms) {
    if (k < 0 || k >= delta.size()) throw std::out_of_range("AffinePiOp::evaluate: missing decision variable");
    if (delta(k) != 0.0) r += op * delta(k);
  }
  return r;
}

int AffinePiOp::max_total_degree() const {
  int d = constant.max_total_degree();
  for (const auto& [k, op] : terms) d = std::max(d, op.max_total_degree());
  return d;
}

AffinePiOp compose(const BlockPiOp& a, const AffinePiOp& b) {
  AffinePiOp r(pi_compose(a, b.constant));
  for (const auto& [k, op] : b.terms) r.terms.emplace(k, pi_compose(a, op));
  return r;
}

AffinePiOp compose(const AffinePiOp& a, const BlockPiOp& b) {
  AffinePiOp r(pi_compose(a.constant, b));
  for (const auto& [k, op] : a.terms) r.terms.emplace(k, pi_compose(op, b));
  return r;
}

AffinePiOp embed(const AffinePiOp& op, SpaceSignature out_sig, std::array<int, 4> out_offset, SpaceSignature in_sig,
                 std::array<int, 4> in_offset) {
  AffinePiOp r(embed(op.constant, out_sig, out_offset, in_sig, in_offset));
  for (const auto& [k, t] : op.terms) r.terms.emplace(k, embed(t, out_sig, out_offset, in_sig, in_offset));
  return r;
}

// ---------------------------------------------------------------------------
// Gram bases

namespace {

Exponent exponent_of(std::initializer_list<std::pair<Var, int>> parts) {
  Exponent e{};
  for (const auto& [v, p] : parts) e[static_cast<int>(v)] = static_cast<std::uint8_t>(e[static_cast<int>(v)] + p);
  return e;
}

PolyKernel mono(std::initializer_list<std::pair<Var, int>> parts, double c = 1.0) {
  return PolyKernel::monomial(exponent_of(parts), c);
}

Rel mode_rel(Mode m) {
  switch (m) {
    case Mode::Mult: return Rel::Mult;
    case Mode::Lower: return Rel::Lower;
    case Mode::Upper: return Rel::Upper;
    case Mode::Full: return Rel::Full;
  }
  return Rel::None;
}

struct Piece {
  Rel rel;
  PolyKernel k;
};

// Endpoint of an integration interval over the middle variable. In the lower
// region 0 < in < out < 1, in the upper region 0 < out < in < 1.
enum class End { Zero, Out, In, One };

int rank_of(End e, bool lower_region) {
  switch (e) {
    case End::Zero: return 0;
    case End::One: return 3;
    case End::Out: return lower_region ? 2 : 1;
    case End::In: return lower_region ? 1 : 2;
  }
  return 0;
}

Limit limit_of(End e, Var out, Var in) {
  switch (e) {
    case End::Zero: return Limit::constant(0.0);
    case End::One: return Limit::constant(1.0);
    case End::Out: return Limit::variable(out);
    case End::In: return Limit::variable(in);
  }
  return Limit::constant(0.0);
}

// Interval of the middle variable on which a row kernel K(mid, s) is nonzero,
// with s the pair operator's out (left row) or in (right row) variable.
std::pair<End, End> support(Mode m, bool left) {
  const End s = left ? End::Out : End::In;
  switch (m) {
    case Mode::Lower: return {s, End::One};
    case Mode::Upper: return {End::Zero, s};
    default: return {End::Zero, End::One};
  }
}

// One coordinate of Z_l^* Z_r: f(out, in) = int K_l(mid, out) K_r(mid, in) dmid.
std::vector<Piece> factor1d(const CoordFactor& l, const CoordFactor& r, bool out_has, bool in_has, Var out, Var in,
                            Var mid) {
  std::vector<Piece> raw;  // in terms of Mult / Lower / Upper, or "both"
  auto full = [&](const PolyKernel& k) {
    raw.push_back({Rel::Lower, k});
    raw.push_back({Rel::Upper, k});
  };
  if (l.mode == Mode::Mult) {
    const int a = l.out_pow;
    switch (r.mode) {
      case Mode::Mult: raw.push_back({Rel::Mult, mono({{out, a + r.out_pow}})}); break;
      case Mode::Lower: raw.push_back({Rel::Lower, mono({{out, a + r.out_pow}, {in, r.in_pow}})}); break;
      case Mode::Upper: raw.push_back({Rel::Upper, mono({{out, a + r.out_pow}, {in, r.in_pow}})}); break;
      case Mode::Full: full(mono({{out, a + r.out_pow}, {in, r.in_pow}})); break;
    }
  } else if (r.mode == Mode::Mult) {
    const int a = r.out_pow;
    switch (l.mode) {
      case Mode::Lower: raw.push_back({Rel::Upper, mono({{in, a + l.out_pow}, {out, l.in_pow}})}); break;
      case Mode::Upper: raw.push_back({Rel::Lower, mono({{in, a + l.out_pow}, {out, l.in_pow}})}); break;
      case Mode::Full: full(mono({{out, l.in_pow}, {in, a + l.out_pow}})); break;
      case Mode::Mult: break;
    }
  } else {
    const PolyKernel base = mono({{out, l.in_pow}, {in, r.in_pow}});
    const PolyKernel integrand = mono({{mid, l.out_pow + r.out_pow}});
    const auto [l_lo, l_hi] = support(l.mode, true);
    const auto [r_lo, r_hi] = support(r.mode, false);
    for (bool lower_region : {true, false}) {
      const End lo = rank_of(l_lo, lower_region) >= rank_of(r_lo, lower_region) ? l_lo : r_lo;
      const End hi = rank_of(l_hi, lower_region) <= rank_of(r_hi, lower_region) ? l_hi : r_hi;
      if (rank_of(lo, lower_region) >= rank_of(hi, lower_region)) continue;
      PolyKernel k = integrand.integrate(mid, limit_of(lo, out, in), limit_of(hi, out, in)) * base;
      if (!k.is_zero()) raw.push_back({lower_region ? Rel::Lower : Rel::Upper, k});
    }
  }
  if (out_has && in_has) return raw;
  // A side without the coordinate sees identical lower and upper pieces.
  std::vector<Piece> res;
  if (raw.empty()) return res;
  const Rel rel = out_has ? Rel::Ext : (in_has ? Rel::Full : Rel::None);
  res.push_back({rel, raw.front().k});
  return res;
}

}  // namespace

void GramBasis::add_row(const GramRow& r) {
  if (r.real_input) {
    if (r.comp < 0 || r.comp >= in_sig_.n0) throw std::invalid_argument("GramBasis: real component out of range");
    if (!(r.x == CoordFactor{}) || !(r.y == CoordFactor{})) {
      throw std::invalid_argument("GramBasis: real input rows carry no spatial factors");
    }
  } else {
    if (r.comp < 0 || r.comp >= in_sig_.n2) throw std::invalid_argument("GramBasis: plane component out of range");
    for (const CoordFactor* f : {&r.x, &r.y}) {
      if (f->mode == Mode::Mult && f->in_pow != 0) throw std::invalid_argument("GramBasis: multiplier with input power");
      if (f->mode == Mode::Full && f->out_pow != 0) throw std::invalid_argument("GramBasis: full row with output power");
    }
  }
  if (r.pre >= static_cast<int>(pre_.size()) || (r.pre >= 0 && r.real_input)) {
    throw std::invalid_argument("GramBasis: invalid pre-operator index");
  }
  rows_.push_back(r);
}

void GramBasis::drop_rows_after(int first, const std::function<bool(const GramRow&)>& pred) {
  auto it = std::remove_if(rows_.begin() + first, rows_.end(), pred);
  rows_.erase(it, rows_.end());
}

void GramBasis::set_pre(int row, int pre) {
  if (pre < -1 || pre >= static_cast<int>(pre_.size()) || (pre >= 0 && rows_.at(row).real_input)) {
    throw std::invalid_argument("GramBasis: invalid pre-operator index");
  }
  rows_.at(row).pre = pre;
}

int GramBasis::add_pre(const BlockPiOp& op) {
  if (!(op.in_sig() == in_sig_) || !(op.out_sig() == in_sig_)) {
    throw SignatureError("GramBasis::add_pre: operator must act on the basis input space");
  }
  pre_.push_back(op);
  pre_adj_.push_back(pi_adjoint(op));
  return static_cast<int>(pre_.size()) - 1;
}

BlockPiOp GramBasis::row_op(int i) const {
  const GramRow& r = rows_.at(i);
  const SpaceSignature out = r.real_output() ? SpaceSignature::real(1) : SpaceSignature::plane(1);
  BlockPiOp op(out, in_sig_);
  if (r.real_input) {
    PolyKernel k(1, in_sig_.n0);
    k.set_block(0, r.comp, PolyKernel::scalar(1.0));
    op.add_term(Space::R, Space::R, Rel::None, Rel::None, k);
    return op;
  }
  auto coord = [](const CoordFactor& f, Var o, Var in) {
    switch (f.mode) {
      case Mode::Mult: return mono({{o, f.out_pow}});
      case Mode::Full: return mono({{in, f.in_pow}});
      default: return mono({{o, f.out_pow}, {in, f.in_pow}});
    }
  };
  PolyKernel k(1, in_sig_.n2);
  k.set_block(0, r.comp, coord(r.x, Var::X, Var::Theta) * coord(r.y, Var::Y, Var::Eta));
  if (r.real_output()) {
    op.add_term(Space::R, Space::XY, Rel::Full, Rel::Full, k);
  } else {
    // A Full coordinate of a function-valued row is the sum of both halves.
    auto rels = [](Mode m) {
      return m == Mode::Full ? std::vector<Rel>{Rel::Lower, Rel::Upper} : std::vector<Rel>{mode_rel(m)};
    };
    for (Rel rx : rels(r.x.mode)) {
      for (Rel ry : rels(r.y.mode)) op.add_term(Space::XY, Space::XY, rx, ry, k);
    }
  }
  return r.pre >= 0 ? pi_compose(op, pre_[r.pre]) : op;
}

BlockPiOp GramBasis::pair_op_reference(int i, int j) const {
  const GramRow& a = rows_.at(i);
  const GramRow& b = rows_.at(j);
  const SpaceSignature sa = a.real_output() ? SpaceSignature::real(1) : SpaceSignature::plane(1);
  const SpaceSignature sb = b.real_output() ? SpaceSignature::real(1) : SpaceSignature::plane(1);
  BlockPiOp couple(sa, sb);
  const Space oa = a.real_output() ? Space::R : Space::XY;
  const Space ob = b.real_output() ? Space::R : Space::XY;
  // The weight as a function of the variable the coupling integrates over.
  auto w = [&](Var xv, Var yv) {
    switch (weight_) {
      case DomainWeight::X: return mono({{xv, 1}}) - mono({{xv, 2}});
      case DomainWeight::Y: return mono({{yv, 1}}) - mono({{yv, 2}});
      default: return PolyKernel::scalar(1.0);
    }
  };
  if (oa == Space::R && ob == Space::R) {
    couple.add_term(oa, ob, Rel::None, Rel::None, PolyKernel::scalar(weight_ == DomainWeight::One ? 1.0 : 1.0 / 6.0));
  } else if (oa == Space::XY && ob == Space::XY) {
    couple.add_term(oa, ob, Rel::Mult, Rel::Mult, w(Var::X, Var::Y));
  } else if (oa == Space::R) {
    couple.add_term(oa, ob, Rel::Full, Rel::Full, w(Var::Theta, Var::Eta));
  } else {
    couple.add_term(oa, ob, Rel::Ext, Rel::Ext, w(Var::X, Var::Y));
  }
  return pi_compose(pi_adjoint(row_op(i)), pi_compose(couple, row_op(j)));
}

BlockPiOp GramBasis::pair_op(int i, int j) const {
  BlockPiOp op = base_pair(i, j);
  const int pa = rows_[i].pre;
  const int pb = rows_[j].pre;
  if (pa >= 0) op = pi_compose(pre_adj_[pa], op);
  if (pb >= 0) op = pi_compose(op, pre_[pb]);
  return op;
}

namespace {

// Z_a^* Z_b with the left row's output powers raised by (sx, sy), which
// inserts the weight x^sx y^sy between the rows.
BlockPiOp shifted_pair(const SpaceSignature& sig, GramRow a, const GramRow& b, int sx, int sy) {
  a.x.out_pow += sx;
  a.y.out_pow += sy;
  BlockPiOp op(sig, sig);
  const Space so = a.real_input ? Space::R : Space::XY;
  const Space si = b.real_input ? Space::R : Space::XY;
  const auto fx = factor1d(a.x, b.x, !a.real_input, !b.real_input, Var::X, Var::Theta, Var::Nu);
  const auto fy = factor1d(a.y, b.y, !a.real_input, !b.real_input, Var::Y, Var::Eta, Var::Mu);
  for (const auto& px : fx) {
    for (const auto& py : fy) {
      PolyKernel k(sig.dim(so), sig.dim(si));
      k.set_block(a.comp, b.comp, px.k * py.k);
      op.add_term(so, si, px.rel, py.rel, k);
    }
  }
  return op;
}

}  // namespace

BlockPiOp GramBasis::base_pair(int i, int j) const {
  const GramRow& a = rows_.at(i);
  const GramRow& b = rows_.at(j);
  switch (weight_) {
    case DomainWeight::X: return shifted_pair(in_sig_, a, b, 1, 0) - shifted_pair(in_sig_, a, b, 2, 0);
    case DomainWeight::Y: return shifted_pair(in_sig_, a, b, 0, 1) - shifted_pair(in_sig_, a, b, 0, 2);
    default: return shifted_pair(in_sig_, a, b, 0, 0);
  }
}

BlockPiOp GramBasis::gram_op(const MatrixXd& G) const {
  if (G.rows() != size() || G.cols() != size()) throw DimensionError("GramBasis::gram_op: size mismatch");
  // Group by pre-operators so each pair of them is composed only once.
  const int np = static_cast<int>(pre_.size()) + 1;
  std::vector<BlockPiOp> inner(np * np, BlockPiOp(in_sig_, in_sig_));
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < size(); ++j) {
      if (G(i, j) != 0.0) inner[(rows_[i].pre + 1) * np + rows_[j].pre + 1] += base_pair(i, j) * G(i, j);
    }
  }
  BlockPiOp op(in_sig_, in_sig_);
  for (int a = 0; a < np; ++a) {
    for (int b = 0; b < np; ++b) {
      BlockPiOp t = inner[a * np + b];
      if (t.is_zero()) continue;
      if (a > 0) t = pi_compose(pre_adj_[a - 1], t);
      if (b > 0) t = pi_compose(t, pre_[b - 1]);
      op += t;
    }
  }
  return op;
}

std::array<int, 2> coord_degrees(const BlockPiOp& op) {
  std::array<int, 2> d{0, 0};
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : op.block(so, si)) {
        for (const auto& [e, c] : k.terms()) {
          d[0] = std::max(d[0], e[static_cast<int>(Var::X)] + e[static_cast<int>(Var::Theta)]);
          d[1] = std::max(d[1], e[static_cast<int>(Var::Y)] + e[static_cast<int>(Var::Eta)]);
        }
      }
    }
  }
  return d;
}

std::array<int, 2> GramBasis::max_pair_degree() const {
  std::array<int, 2> d{0, 0};
  for (int i = 0; i < size(); ++i) {
    const auto di = coord_degrees(pair_op(i, i));
    d[0] = std::max(d[0], di[0]);
    d[1] = std::max(d[1], di[1]);
  }
  return d;
}

namespace {

// Monomials of total degree <= d over the listed variables.
std::vector<Exponent> monomials(std::vector<Var> vars, int d) { return MonomialBasis(std::move(vars), d).exponents(); }

int pw(const Exponent& e, Var v) { return e[static_cast<int>(v)]; }

std::vector<Var> coord_vars(Mode m, Var out, Var in) {
  std::vector<Var> v;
  if (m != Mode::Full) v.push_back(out);
  if (m != Mode::Mult) v.push_back(in);
  return v;
}

// Rows whose x and y factors each have degree <= d.
void add_family(GramBasis& z, int comp, Mode mx, Mode my, int d) {
  for (const Exponent& ex : monomials(coord_vars(mx, Var::X, Var::Theta), d)) {
    for (const Exponent& ey : monomials(coord_vars(my, Var::Y, Var::Eta), d)) {
      GramRow r;
      r.comp = comp;
      r.x = {mx, pw(ex, Var::X), pw(ex, Var::Theta)};
      r.y = {my, pw(ey, Var::Y), pw(ey, Var::Eta)};
      z.add_row(r);
    }
  }
}

// Rows of total degree <= d.
void add_family_total(GramBasis& z, int comp, Mode mx, Mode my, int d) {
  std::vector<Var> vars = coord_vars(mx, Var::X, Var::Theta);
  for (Var v : coord_vars(my, Var::Y, Var::Eta)) vars.push_back(v);
  for (const Exponent& e : monomials(vars, d)) {
    GramRow r;
    r.comp = comp;
    r.x = {mx, pw(e, Var::X), pw(e, Var::Theta)};
    r.y = {my, pw(e, Var::Y), pw(e, Var::Eta)};
    z.add_row(r);
  }
}

}  // namespace

GramBasis separable_basis(int n, int d) {
  GramBasis z(SpaceSignature::plane(n));
  for (int i = 0; i < n; ++i) add_family_total(z, i, Mode::Mult, Mode::Mult, d);
  for (int i = 0; i < n; ++i) add_family_total(z, i, Mode::Full, Mode::Full, d);
  return z;
}

KernelStructure kernel_structure(const AffinePiOp& op) {
  KernelStructure s;
  auto note = [&](const BlockPiOp& b) {
    const auto d = coord_degrees(b);
    s.max_degree[0] = std::max(s.max_degree[0], d[0]);
    s.max_degree[1] = std::max(s.max_degree[1], d[1]);
  };
  note(op.constant);
  for (const auto& [k, t] : op.terms) note(t);
  auto scan = [&](const BlockPiOp& b) {
    const Block& pp = b.block(Space::XY, Space::XY);
    auto has = [&](Rel rx, Rel ry) { return pp.count({rx, ry}) > 0; };
    auto same = [&](Rel a1, Rel a2, Rel b1, Rel b2) {
      auto ia = pp.find({a1, a2});
      auto ib = pp.find({b1, b2});
      if (ia == pp.end() || ib == pp.end()) return ia == ib;
      return ia->second.approx_equal(ib->second, 1e-12 * (1.0 + ia->second.max_abs_coeff()));
    };
    if (has(Rel::Mult, Rel::Mult)) s.mult_mult = true;
    if (has(Rel::Mult, Rel::Lower) || has(Rel::Mult, Rel::Upper)) s.mult_int = true;
    if (has(Rel::Lower, Rel::Mult) || has(Rel::Upper, Rel::Mult)) s.int_mult = true;
    const bool any_int = has(Rel::Lower, Rel::Lower) || has(Rel::Lower, Rel::Upper) || has(Rel::Upper, Rel::Lower) ||
                         has(Rel::Upper, Rel::Upper);
    if (any_int) {
      // A full double integral carries the same kernel on all four quadrants.
      const bool full = same(Rel::Lower, Rel::Lower, Rel::Lower, Rel::Upper) &&
                        same(Rel::Lower, Rel::Lower, Rel::Upper, Rel::Lower) &&
                        same(Rel::Lower, Rel::Lower, Rel::Upper, Rel::Upper);
      if (full) {
        s.real_plane = true;
      } else {
        s.int_int = true;
      }
    }
    if (!b.block(Space::R, Space::XY).empty() || !b.block(Space::XY, Space::R).empty()) s.real_plane = true;
  };
  scan(op.constant);
  for (const auto& [k, t] : op.terms) scan(t);
  return s;
}

GramBasis structured_basis(const SpaceSignature& sig, const KernelStructure& s, int d) {
  GramBasis z(sig);
  for (int j = 0; j < sig.n0; ++j) {
    GramRow r;
    r.real_input = true;
    r.comp = j;
    z.add_row(r);
  }
  for (int i = 0; i < sig.n2; ++i) {
    if (s.mult_mult) add_family(z, i, Mode::Mult, Mode::Mult, d);
    if (s.mult_int) {
      add_family(z, i, Mode::Mult, Mode::Lower, d);
      add_family(z, i, Mode::Mult, Mode::Upper, d);
    }
    if (s.int_mult) {
      add_family(z, i, Mode::Lower, Mode::Mult, d);
      add_family(z, i, Mode::Upper, Mode::Mult, d);
    }
    if (s.int_int) {
      for (Mode mx : {Mode::Lower, Mode::Upper}) {
        for (Mode my : {Mode::Lower, Mode::Upper}) add_family(z, i, mx, my, d);
      }
    }
    // Full integral rows are cheap; one extra degree lets them carry the
    // separable part of the kernels.
    if (s.int_int || s.real_plane || s.mult_int || s.int_mult) add_family(z, i, Mode::Full, Mode::Full, d + 1);
  }
  return z;
}

GramBasis state_basis(const SpaceSignature& sig, const BlockPiOp& T,
                      const std::vector<std::array<int, 2>>& state_orders, int d) {
  if (!(T.in_sig() == SpaceSignature::plane(sig.n2)) || !(T.out_sig() == T.in_sig())) {
    throw SignatureError("state_basis: T must act on the plane part of the signature");
  }
  GramBasis z(sig);
  for (int j = 0; j < sig.n0; ++j) {
    GramRow r;
    r.real_input = true;
    r.comp = j;
    z.add_row(r);
  }
  std::vector<std::array<int, 2>> half{{0, 0}};
  for (const auto& o : state_orders) {
    const std::array<int, 2> h{o[0] / 2, o[1] / 2};
    if (std::find(half.begin(), half.end(), h) == half.end()) half.push_back(h);
  }
  std::sort(half.begin(), half.end());
  for (const auto& h : half) {
    const int pre = z.add_pre(embed(diff_compose(T, h[0], h[1]), sig, {0, 0, 0, 0}, sig, {0, 0, 0, 0}));
    for (int i = 0; i < sig.n2; ++i) {
      const int first = z.size();
      add_family(z, i, Mode::Mult, Mode::Mult, d);
      if (h[0] == 0 && h[1] == 0) {
        add_family(z, i, Mode::Full, Mode::Full, d);
        // Single integrals in one coordinate; without them the bound stalls
        // well above the achievable level on the Dirichlet-Neumann example.
        for (Mode m : {Mode::Lower, Mode::Upper}) {
          add_family(z, i, m, Mode::Mult, d);
          add_family(z, i, Mode::Mult, m, d);
        }
      } else {
        // Edge traces: a differentiated coordinate integrated out without
        // weight. Weighted integrals and the doubly integrated rows follow
        // from these and the rows on T by integration by parts.
        const int before = z.size();
        if (h[0] > 0) {
          for (Mode m : {Mode::Mult, Mode::Lower, Mode::Upper}) add_family(z, i, Mode::Full, m, d);
        }
        if (h[1] > 0) {
          for (Mode m : {Mode::Mult, Mode::Lower, Mode::Upper}) add_family(z, i, m, Mode::Full, d);
        }
        z.drop_rows_after(before, [](const GramRow& r) {
          return (r.x.mode == Mode::Full && r.x.in_pow > 0) || (r.y.mode == Mode::Full && r.y.in_pow > 0);
        });
      }
      for (int k = first; k < z.size(); ++k) z.set_pre(k, pre);
    }
  }
  return z;
}

std::vector<GramBasis> weighted_state_bases(const SpaceSignature& sig, const BlockPiOp& T,
                                            const std::vector<std::array<int, 2>>& state_orders, int d) {
  std::vector<GramBasis> out;
  if (d == 0) return out;
  const GramBasis full = state_basis(sig, T, state_orders, d);
  for (DomainWeight w : {DomainWeight::X, DomainWeight::Y}) {
    GramBasis z(sig, w);
    for (const BlockPiOp& op : full.pre()) z.add_pre(op);
    for (int pre = 0; pre < static_cast<int>(full.pre().size()); ++pre) {
      for (int i = 0; i < sig.n2; ++i) {
        const int first = z.size();
        add_family(z, i, Mode::Mult, Mode::Mult, d - 1);
        for (int k = first; k < z.size(); ++k) z.set_pre(k, pre);
      }
    }
    out.push_back(std::move(z));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernel coefficient matching

namespace {

// Keys kept for a self-adjoint operator; the rest are adjoint images.
bool canonical(Space out, Space in, Rel rx, Rel ry, int row, int col) {
  if (out == Space::R && in == Space::R) return row <= col;
  if (out == Space::XY && in == Space::R) return false;
  if (out == Space::R && in == Space::XY) return true;
  if (out == Space::XY && in == Space::XY) {
    if (rx == Rel::Lower) return true;
    if (rx == Rel::Mult && ry == Rel::Lower) return true;
    if (rx == Rel::Mult && ry == Rel::Mult) return row <= col;
    return false;
  }
  throw StructureError("canonical_coefficients: only R and L2[x,y] components are supported");
}

template <class F>
void for_each_canonical(const BlockPiOp& op, F&& f) {
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : op.block(so, si)) {
        for (const auto& [e, c] : k.terms()) {
          for (int r = 0; r < c.rows(); ++r) {
            for (int cc = 0; cc < c.cols(); ++cc) {
              if (c(r, cc) == 0.0) continue;
              if (!canonical(so, si, rp.first, rp.second, r, cc)) continue;
              f(KernelKey{so, si, rp.first, rp.second, e, r, cc}, c(r, cc));
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::map<KernelKey, double> canonical_coefficients(const BlockPiOp& op) {
  std::map<KernelKey, double> m;
  for_each_canonical(op, [&](const KernelKey& k, double v) { m[k] += v; });
  return m;
}

int upper_index(int n, int i, int j) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i - 1) / 2 + (j - i);
}

namespace {

// W = sum_k w_k F_k with F_k mapping the sensed output space into L2[x,y].
std::vector<BlockPiOp> gain_basis(int n_u, const SpaceSignature& q, int d) {
  std::vector<BlockPiOp> out;
  const SpaceSignature plane = SpaceSignature::plane(n_u);
  auto push = [&](Space in, Rel rx, Rel ry, int i, int j, const PolyKernel& m) {
    BlockPiOp op(plane, q);
    PolyKernel k(n_u, q.dim(in));
    k.set_block(i, j, m);
    op.add_term(Space::XY, in, rx, ry, k);
    out.push_back(std::move(op));
  };
  for (int i = 0; i < n_u; ++i) {
    for (int j = 0; j < q.n0; ++j) {
      for (const Exponent& e : monomials({Var::X, Var::Y}, d)) {
        push(Space::R, Rel::Ext, Rel::Ext, i, j, PolyKernel::monomial(e));
      }
    }
    for (int j = 0; j < q.nx; ++j) {
      for (const Exponent& e : monomials({Var::X, Var::Y}, d)) {
        push(Space::X, Rel::Mult, Rel::Ext, i, j, PolyKernel::monomial(e));
      }
      for (Rel r : {Rel::Lower, Rel::Upper}) {
        for (const Exponent& e : monomials({Var::X, Var::Theta, Var::Y}, d)) {
          push(Space::X, r, Rel::Ext, i, j, PolyKernel::monomial(e));
        }
      }
    }
    for (int j = 0; j < q.ny; ++j) {
      for (const Exponent& e : monomials({Var::X, Var::Y}, d)) {
        push(Space::Y, Rel::Ext, Rel::Mult, i, j, PolyKernel::monomial(e));
      }
      for (Rel r : {Rel::Lower, Rel::Upper}) {
        for (const Exponent& e : monomials({Var::X, Var::Y, Var::Eta}, d)) {
          push(Space::Y, Rel::Ext, r, i, j, PolyKernel::monomial(e));
        }
      }
    }
  }
  return out;
}

struct RowData {
  double rhs = 0.0;
  std::map<int, double> vars;               // decision variable -> coefficient
  std::map<std::array<int, 3>, double> q;  // (block, i <= j) of -Q -> coefficient of that entry
};

LpiProblem assemble(const PieSystem& pie, const LpiOptions& opt, bool estimator) {
  if (!(opt.eps > 0)) throw std::invalid_argument("assemble LPI: eps must be positive");
  if (opt.d1 < 0 || opt.d2 < 0 || opt.d3 < 0) throw std::invalid_argument("assemble LPI: degrees must be >= 0");
  if (opt.gamma && !(*opt.gamma > 0)) throw std::invalid_argument("assemble LPI: fixed gamma must be positive");
  const int nu = pie.n_u();
  const int nz = pie.n_z();
  const int nw = pie.n_w();
  const SpaceSignature plane = SpaceSignature::plane(nu);
  const SpaceSignature S{nz + nw, 0, 0, nu};

  LpiProblem prob;
  prob.estimator = estimator;
  prob.eps = opt.eps;
  prob.z1 = separable_basis(nu, opt.d1);
  const int p = prob.z1.size();
  prob.num_p_vars = p * (p + 1) / 2;
  if (estimator) prob.w_basis = gain_basis(nu, pie.q_sig(), opt.d3);
  const int nW = static_cast<int>(prob.w_basis.size());
  int nvars = prob.num_p_vars + nW;
  if (!opt.gamma) {
    prob.gamma_var = nvars++;
  } else {
    prob.gamma_fixed = *opt.gamma;
  }

  // P = eps I + sum P_ij (pair_ij + pair_ji).
  AffinePiOp Pa(BlockPiOp::identity(plane) * opt.eps);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      BlockPiOp e = prob.z1.pair_op(i, j);
      if (i != j) e += prob.z1.pair_op(j, i);
      Pa.terms.emplace(upper_index(p, i, j), e);
    }
  }
  AffinePiOp Wa(BlockPiOp::zero(plane, pie.q_sig()));
  for (int k = 0; k < nW; ++k) Wa.terms.emplace(prob.num_p_vars + k, prob.w_basis[k]);

  const BlockPiOp Tt = pi_adjoint(pie.T);
  AffinePiOp Hvv = compose(Tt, compose(Pa, pie.A));
  if (estimator) Hvv = Hvv + compose(Tt, compose(Wa, pie.Cq));

  AffinePiOp half = embed(Hvv, S, {0, 0, 0, 0}, S, {0, 0, 0, 0});
  if (nz > 0) {
    half = half + AffinePiOp(embed(pie.C, S, {0, 0, 0, 0}, S, {0, 0, 0, 0}));
    if (nw > 0) {
      half = half + AffinePiOp(embed(pie.D * (estimator ? -1.0 : 1.0), S, {0, 0, 0, 0}, S, {nz, 0, 0, 0}));
    }
  }
  if (nw > 0) {
    AffinePiOp Hwv = compose(compose(pi_adjoint(pie.B), Pa), pie.T);
    if (estimator) {
      Hwv = (Hwv + compose(compose(pi_adjoint(pie.Dq), Wa.adjoint()), pie.T)) * -1.0;
    }
    half = half + embed(Hwv, S, {nz, 0, 0, 0}, S, {0, 0, 0, 0});
  }
  if (nz + nw > 0) {
    BlockPiOp g(S, S);
    g.add_term(Space::R, Space::R, Rel::None, Rel::None, PolyKernel::identity(nz + nw) * -0.5);
    if (opt.gamma) {
      half.constant += g * *opt.gamma;
    } else {
      half.terms.emplace(prob.gamma_var, g);
    }
  }
  prob.lhs = half + half.adjoint();

  // Positivity bases shaped by the operator they have to match.
  const KernelStructure ks = kernel_structure(prob.lhs);
  const bool from_pde = !pie.state_orders.empty();
  auto make_z2 = [&](int d) {
    std::vector<GramBasis> z;
    if (from_pde) {
      z.push_back(state_basis(S, pie.T, pie.state_orders, d));
      for (GramBasis& b : weighted_state_bases(S, pie.T, pie.state_orders, d)) z.push_back(std::move(b));
    } else {
      z.push_back(structured_basis(S, ks, d));
    }
    return z;
  };
  prob.z2 = make_z2(opt.d2);
  auto reach_of = [](const std::vector<GramBasis>& z) {
    std::array<int, 2> r{0, 0};
    for (const GramBasis& b : z) {
      const auto rb = b.max_pair_degree();
      r = {std::max(r[0], rb[0]), std::max(r[1], rb[1])};
    }
    return r;
  };
  auto reaches = [&](const std::vector<GramBasis>& z) {
    const auto reach = reach_of(z);
    return reach[0] >= ks.max_degree[0] && reach[1] >= ks.max_degree[1];
  };
  if (!reaches(prob.z2)) {
    int d = opt.d2 + 1;
    for (; d <= opt.d2 + 20; ++d) {
      if (reaches(make_z2(d))) break;
    }
    const auto reach = reach_of(prob.z2);
    std::ostringstream os;
    os << "positivity basis of degree " << opt.d2 << " reaches kernel degrees (" << reach[0] << ", " << reach[1]
       << ") in (x, y) but the operator inequality has degrees (" << ks.max_degree[0] << ", " << ks.max_degree[1]
       << "); use d2 >= " << d;
    throw DegreeError(os.str(), d);
  }
  const int nq = static_cast<int>(prob.z2.size());
  if (opt.verbose) {
    std::cerr << "lpi: P gram " << p << ", Q grams";
    for (const GramBasis& b : prob.z2) std::cerr << " " << b.size();
    std::cerr << ", W vars " << nW << ", lhs degrees " << ks.max_degree[0] << "," << ks.max_degree[1] << "\n";
  }

  // Collect equations on canonical kernel coefficients.
  std::map<KernelKey, RowData> rows;
  for_each_canonical(prob.lhs.constant, [&](const KernelKey& k, double v) { rows[k].rhs -= v; });
  for (const auto& [var, op] : prob.lhs.terms) {
    for_each_canonical(op, [&](const KernelKey& k, double v) { rows[k].vars[var] += v; });
  }
  for (int b = 0; b < nq; ++b) {
    const GramBasis& z = prob.z2[b];
    for (int i = 0; i < z.size(); ++i) {
      for (int j = i; j < z.size(); ++j) {
        BlockPiOp e = z.pair_op(i, j);
        if (i != j) e += pi_adjoint(e);
        // LHS = Z2^* M[Q] Z2 with Q = -X, so the X entries enter with a plus sign.
        for_each_canonical(e, [&](const KernelKey& k, double v) { rows[k].q[{b, i, j}] += v; });
      }
    }
  }

  // A psd Gram block whose diagonal entries are forced to zero has those rows
  // and columns zero as well; removing them restores an interior.
  {
    double cmax = 0.0;
    for (const auto& [k, rd] : rows) {
      for (const auto& [bij, c] : rd.q) cmax = std::max(cmax, std::abs(c));
    }
    const double tol = opt.coeff_tol * std::max(1.0, cmax);
    std::vector<std::vector<char>> dead(nq);
    for (int b = 0; b < nq; ++b) dead[b].assign(prob.z2[b].size(), 0);
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& [k, rd] : rows) {
        if (std::abs(rd.rhs) > tol) continue;
        bool vars = false;
        for (const auto& [v, c] : rd.vars) vars = vars || std::abs(c) > tol;
        if (vars) continue;
        int sign = 0;
        bool ok = true;
        std::vector<std::pair<int, int>> diag;
        for (const auto& [bij, c] : rd.q) {
          const auto [b, i, j] = bij;
          if (std::abs(c) <= tol || dead[b][i] || dead[b][j]) continue;
          const int sg = c > 0 ? 1 : -1;
          if (i != j || (sign != 0 && sg != sign)) {
            ok = false;
            break;
          }
          sign = sg;
          diag.emplace_back(b, i);
        }
        if (!ok || diag.empty()) continue;
        for (const auto& [b, i] : diag) dead[b][i] = 1;
        changed = true;
      }
    }
    std::vector<std::vector<int>> remap(nq);
    int removed = 0;
    for (int b = 0; b < nq; ++b) {
      const GramBasis& z = prob.z2[b];
      GramBasis kept(S, z.weight());
      for (const BlockPiOp& op : z.pre()) kept.add_pre(op);
      remap[b].assign(z.size(), -1);
      for (int i = 0; i < z.size(); ++i) {
        if (dead[b][i]) continue;
        remap[b][i] = kept.size();
        kept.add_row(z.rows()[i]);
      }
      removed += z.size() - kept.size();
      prob.z2[b] = std::move(kept);
    }
    if (removed > 0) {
      for (auto& [k, rd] : rows) {
        std::map<std::array<int, 3>, double> q;
        for (const auto& [bij, c] : rd.q) {
          const auto [b, i, j] = bij;
          if (!dead[b][i] && !dead[b][j]) q[{b, remap[b][i], remap[b][j]}] = c;
        }
        rd.q.swap(q);
      }
      if (opt.verbose) std::cerr << "lpi: " << removed << " Gram rows forced to zero\n";
    }
  }
  std::vector<int> q_offset(nq + 1, 0);
  for (int b = 0; b < nq; ++b) {
    const int r = prob.z2[b].size();
    q_offset[b + 1] = q_offset[b] + r * (r + 1) / 2;
  }

  // Scale, drop numerically empty rows and detect dependent ones.
  double gmax = 0.0;
  for (const auto& [k, rd] : rows) {
    gmax = std::max(gmax, std::abs(rd.rhs));
    for (const auto& [v, c] : rd.vars) gmax = std::max(gmax, std::abs(c));
    for (const auto& [bij, c] : rd.q) gmax = std::max(gmax, std::abs(c));
  }
  const double ztol = opt.coeff_tol * std::max(1.0, gmax);
  const int nP = prob.num_p_vars;
  auto col_of_var = [&](int var) { return var; };  // P entries, W, gamma
  auto col_of_q = [&](const std::array<int, 3>& bij) {
    return nvars + q_offset[bij[0]] + upper_index(prob.z2[bij[0]].size(), bij[1], bij[2]);
  };
  const int ncols = nvars + q_offset[nq];

  std::vector<const RowData*> live;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> scale;
  for (const auto& [k, rd] : rows) {
    double rmax = 0.0;
    for (const auto& [v, c] : rd.vars) rmax = std::max(rmax, std::abs(c));
    for (const auto& [bij, c] : rd.q) rmax = std::max(rmax, std::abs(c));
    if (rmax <= ztol) {
      if (std::abs(rd.rhs) > ztol) {
        std::ostringstream os;
        os << "kernel coefficient " << space_name(k.out) << "<-" << space_name(k.in) << " (" << rel_name(k.rx) << ","
           << rel_name(k.ry) << ") cannot be matched by any decision variable";
        throw DegreeError(os.str(), opt.d2 + 1);
      }
      continue;
    }
    double nrm = 0.0;
    for (const auto& [v, c] : rd.vars) {
      if (std::abs(c) > ztol) nrm += c * c;
    }
    for (const auto& [bij, c] : rd.q) {
      if (std::abs(c) > ztol) nrm += c * c;
    }
    nrm = std::sqrt(nrm);
    const int row = static_cast<int>(live.size());
    for (const auto& [v, c] : rd.vars) {
      if (std::abs(c) > ztol) trip.emplace_back(row, col_of_var(v), c / nrm);
    }
    for (const auto& [bij, c] : rd.q) {
      if (std::abs(c) > ztol) trip.emplace_back(row, col_of_q(bij), c / nrm);
    }
    live.push_back(&rd);
    scale.push_back(nrm);
  }
  prob.rows_total = live.size();
  const int m = static_cast<int>(live.size());
  Eigen::SparseMatrix<double, Eigen::RowMajor> Asp(m, ncols);
  Asp.setFromTriplets(trip.begin(), trip.end());
  const MatrixXd G = MatrixXd(Asp * Asp.transpose());

  // Greedy pivoted Cholesky on the row Gram matrix keeps a maximal set of
  // numerically independent rows.
  std::vector<int> keep;
  {
    MatrixXd L = MatrixXd::Zero(m, m);
    VectorXd diag = G.diagonal();
    std::vector<char> used(m, 0);
    const double dtol = 1e-10;
    for (int step = 0; step < m; ++step) {
      int best = -1;
      double bv = dtol;
      for (int i = 0; i < m; ++i) {
        if (!used[i] && diag(i) > bv) {
          bv = diag(i);
          best = i;
        }
      }
      if (best < 0) break;
      used[best] = 1;
      const int c = static_cast<int>(keep.size());
      const double piv = std::sqrt(diag(best));
      for (int i = 0; i < m; ++i) {
        if (used[i] && i != best) continue;
        double s = G(i, best);
        for (int t = 0; t < c; ++t) s -= L(i, t) * L(best, t);
        L(i, c) = s / piv;
      }
      for (int i = 0; i < m; ++i) {
        if (!used[i]) diag(i) -= L(i, c) * L(i, c);
      }
      keep.push_back(best);
    }
    std::sort(keep.begin(), keep.end());
  }
  prob.rows_dropped = static_cast<std::size_t>(m) - keep.size();

  // Dropped rows must be implied by the kept ones.
  if (prob.rows_dropped > 0) {
    std::vector<char> kept(m, 0);
    for (int i : keep) kept[i] = 1;
    const int mk = static_cast<int>(keep.size());
    MatrixXd Gk(mk, mk);
    VectorXd bk(mk);
    for (int a = 0; a < mk; ++a) {
      bk(a) = live[keep[a]]->rhs / scale[keep[a]];
      for (int b = 0; b < mk; ++b) Gk(a, b) = G(keep[a], keep[b]);
    }
    Eigen::LDLT<MatrixXd> ldlt(Gk);
    for (int i = 0; i < m; ++i) {
      if (kept[i]) continue;
      VectorXd gi(mk);
      for (int a = 0; a < mk; ++a) gi(a) = G(keep[a], i);
      const double implied = ldlt.solve(gi).dot(bk);
      const double actual = live[i]->rhs / scale[i];
      if (std::abs(implied - actual) > 1e-7 * (1.0 + std::abs(actual))) {
        throw std::runtime_error("assemble LPI: kernel matching equations are inconsistent");
      }
    }
  }

  SdpProblem& sdp = prob.sdp;
  sdp.block_sizes = {p};
  for (const GramBasis& z : prob.z2) sdp.block_sizes.push_back(z.size());
  sdp.num_free = nW + (opt.gamma ? 0 : 1);
  if (!opt.gamma) {
    prob.gamma_free = nW;
    sdp.objective.free.emplace_back(prob.gamma_free, 1.0);
  } else {
    // A small weight bounds the feasible set without hiding a dual ray when
    // the LMI is infeasible.
    const double weight = 1e-6;
    for (int b = 0; b < static_cast<int>(sdp.block_sizes.size()); ++b) {
      for (int i = 0; i < sdp.block_sizes[b]; ++i) sdp.objective.mat.push_back({b, i, i, weight});
    }
  }
  // Map the upper-triangle P index back to (i, j).
  std::vector<std::pair<int, int>> pij(nP);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) pij[upper_index(p, i, j)] = {i, j};
  }
  for (int idx : keep) {
    const RowData& rd = *live[idx];
    const double s = scale[idx];
    LinearForm f;
    for (const auto& [v, c] : rd.vars) {
      if (std::abs(c) <= ztol) continue;
      if (v < nP) {
        const auto [i, j] = pij[v];
        f.mat.push_back({0, i, j, (i == j ? c : 0.5 * c) / s});
      } else {
        f.free.emplace_back(v - nP, c / s);
      }
    }
    for (const auto& [bij, c] : rd.q) {
      if (std::abs(c) <= ztol) continue;
      const auto [b, i, j] = bij;
      f.mat.push_back({1 + b, i, j, (i == j ? c : 0.5 * c) / s});
    }
    sdp.add_constraint(std::move(f), rd.rhs / s);
  }
  if (opt.verbose) {
    std::cerr << "lpi: " << prob.rows_total << " matching rows, " << prob.rows_dropped << " dependent rows dropped\n";
  }
  return prob;
}

}  // namespace

LpiProblem assemble_estimator_lmi(const PieSystem& pie, const LpiOptions& opt) { return assemble(pie, opt, true); }

LpiProblem assemble_gain_analysis_lmi(const PieSystem& pie, const LpiOptions& opt) {
  return assemble(pie, opt, false);
}

LpiSolution extract_solution(const LpiProblem& prob, const SdpSolution& raw, double max_residual) {
  if (raw.status != SdpStatus::Optimal) {
    throw ExtractionError("extract_solution: solver status is " + status_name(raw.status));
  }
  if (raw.primal_residual > max_residual || raw.dual_residual > max_residual) {
    throw ExtractionError("extract_solution: residuals exceed tolerance");
  }
  LpiSolution s;
  const int p = prob.z1.size();
  const int nW = static_cast<int>(prob.w_basis.size());
  s.P_gram = 0.5 * (raw.X.at(0) + raw.X.at(0).transpose());
  for (std::size_t b = 0; b < prob.z2.size(); ++b) {
    s.Q_gram.push_back(-0.5 * (raw.X.at(1 + b) + raw.X.at(1 + b).transpose()));
  }
  s.w = raw.f.head(nW);
  s.gamma = prob.gamma_free >= 0 ? raw.f(prob.gamma_free) : prob.gamma_fixed;
  s.delta = VectorXd::Zero(prob.num_p_vars + nW + (prob.gamma_var >= 0 ? 1 : 0));
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) s.delta(upper_index(p, i, j)) = s.P_gram(i, j);
  }
  for (int k = 0; k < nW; ++k) s.delta(prob.num_p_vars + k) = s.w(k);
  if (prob.gamma_var >= 0) s.delta(prob.gamma_var) = s.gamma;

  const int nu = prob.z1.in_sig().n2;
  s.P = BlockPiOp::identity(SpaceSignature::plane(nu)) * prob.eps + prob.z1.gram_op(s.P_gram);
  if (!prob.w_basis.empty()) {
    s.W = prob.w_basis.front() * 0.0;
    for (int k = 0; k < nW; ++k) {
      if (s.w(k) != 0.0) s.W += prob.w_basis[k] * s.w(k);
    }
  }
  return s;
}

BlockPiOp matching_residual(const LpiProblem& prob, const LpiSolution& sol) {
  BlockPiOp r = prob.lhs.evaluate(sol.delta);
  for (std::size_t b = 0; b < prob.z2.size(); ++b) r = r - prob.z2[b].gram_op(sol.Q_gram.at(b));
  return r;
}

}  // namespace pie
