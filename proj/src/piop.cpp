#include "pie/piop.hpp"

#include <sstream>

#include "pie/quadrature.hpp"

namespace pie {

namespace {

int sidx(Space s) { return static_cast<int>(s); }

// Variables playing the roles of output, input and middle coordinate.
struct Coord {
  Var out;
  Var in;
  Var mid;
};
constexpr Coord kCx{Var::X, Var::Theta, Var::Nu};
constexpr Coord kCy{Var::Y, Var::Eta, Var::Mu};

Rel rel_of(const RelPair& p, bool x) { return x ? p.first : p.second; }

bool allowed_vars(const PolyKernel& k, Rel rx, Rel ry) {
  auto ok = [&](Rel r, const Coord& c) {
    switch (r) {
      case Rel::Mult:
      case Rel::Ext:
        return !k.depends_on(c.in);
      case Rel::Lower:
      case Rel::Upper:
        return true;
      case Rel::Full:
        return !k.depends_on(c.out);
      case Rel::None:
        return !k.depends_on(c.out) && !k.depends_on(c.in);
    }
    return false;
  };
  return ok(rx, kCx) && ok(ry, kCy) && !k.depends_on(Var::Nu) && !k.depends_on(Var::Mu);
}

// Symbolic limit in terms of a coordinate's variables.
enum class Lim { Zero, One, Out, In };

Limit make_limit(Lim l, const Coord& c) {
  switch (l) {
    case Lim::Zero:
      return Limit::constant(0.0);
    case Lim::One:
      return Limit::constant(1.0);
    case Lim::Out:
      return Limit::variable(c.out);
    case Lim::In:
      return Limit::variable(c.in);
  }
  return Limit::constant(0.0);
}

enum class Act { SubsOut, SubsIn, Integrate, Nothing };

struct Step {
  Rel result;
  Act act;
  Lim lo = Lim::Zero;
  Lim hi = Lim::Zero;
};

// One-coordinate composition table: a has relation ra between output s and
// middle m, b has rb between m and input t. The middle variable is
// eliminated by substitution or integration.
std::vector<Step> compose_rule(Rel ra, Rel rb) {
  using R = Rel;
  switch (ra) {
    case R::Mult:
      switch (rb) {
        case R::Mult: return {{R::Mult, Act::SubsOut}};
        case R::Lower: return {{R::Lower, Act::SubsOut}};
        case R::Upper: return {{R::Upper, Act::SubsOut}};
        case R::Ext: return {{R::Ext, Act::SubsOut}};
        default: break;
      }
      break;
    case R::Lower:
      switch (rb) {
        case R::Mult: return {{R::Lower, Act::SubsIn}};
        case R::Lower: return {{R::Lower, Act::Integrate, Lim::In, Lim::Out}};
        case R::Upper:
          return {{R::Lower, Act::Integrate, Lim::Zero, Lim::In},
                  {R::Upper, Act::Integrate, Lim::Zero, Lim::Out}};
        case R::Ext: return {{R::Ext, Act::Integrate, Lim::Zero, Lim::Out}};
        default: break;
      }
      break;
    case R::Upper:
      switch (rb) {
        case R::Mult: return {{R::Upper, Act::SubsIn}};
        case R::Lower:
          return {{R::Lower, Act::Integrate, Lim::Out, Lim::One},
                  {R::Upper, Act::Integrate, Lim::In, Lim::One}};
        case R::Upper: return {{R::Upper, Act::Integrate, Lim::Out, Lim::In}};
        case R::Ext: return {{R::Ext, Act::Integrate, Lim::Out, Lim::One}};
        default: break;
      }
      break;
    case R::Full:
      switch (rb) {
        case R::Mult: return {{R::Full, Act::SubsIn}};
        case R::Lower: return {{R::Full, Act::Integrate, Lim::In, Lim::One}};
        case R::Upper: return {{R::Full, Act::Integrate, Lim::Zero, Lim::In}};
        case R::Ext: return {{R::None, Act::Integrate, Lim::Zero, Lim::One}};
        default: break;
      }
      break;
    case R::Ext:
      switch (rb) {
        case R::Full: return {{R::Lower, Act::Nothing}, {R::Upper, Act::Nothing}};
        case R::None: return {{R::Ext, Act::Nothing}};
        default: break;
      }
      break;
    case R::None:
      switch (rb) {
        case R::Full: return {{R::Full, Act::Nothing}};
        case R::None: return {{R::None, Act::Nothing}};
        default: break;
      }
      break;
  }
  throw StructureError("pi_compose: incompatible relations " + rel_name(ra) + " o " + rel_name(rb));
}

PolyKernel apply_step(const PolyKernel& k, const Step& s, const Coord& c) {
  switch (s.act) {
    case Act::SubsOut:
      return k.subs(c.mid, Limit::variable(c.out));
    case Act::SubsIn:
      return k.subs(c.mid, Limit::variable(c.in));
    case Act::Integrate:
      return k.integrate(c.mid, make_limit(s.lo, c), make_limit(s.hi, c));
    case Act::Nothing:
      return k;
  }
  return k;
}

Rel adjoint_rel(Rel r) {
  switch (r) {
    case Rel::Lower: return Rel::Upper;
    case Rel::Upper: return Rel::Lower;
    case Rel::Ext: return Rel::Full;
    case Rel::Full: return Rel::Ext;
    default: return r;
  }
}

std::array<Var, kNumVars> rename_a() {
  auto p = identity_perm();
  p[static_cast<int>(Var::Theta)] = Var::Nu;
  p[static_cast<int>(Var::Eta)] = Var::Mu;
  return p;
}

std::array<Var, kNumVars> rename_b() {
  auto p = identity_perm();
  p[static_cast<int>(Var::X)] = Var::Nu;
  p[static_cast<int>(Var::Y)] = Var::Mu;
  return p;
}

double structural_tol(const BlockPiOp& op) { return 1e-12 * (1.0 + op.max_abs_coeff()); }

}  // namespace

std::string space_name(Space s) {
  switch (s) {
    case Space::R: return "R";
    case Space::X: return "L2[x]";
    case Space::Y: return "L2[y]";
    case Space::XY: return "L2[x,y]";
  }
  return "?";
}

std::string rel_name(Rel r) {
  switch (r) {
    case Rel::Mult: return "mult";
    case Rel::Lower: return "lower";
    case Rel::Upper: return "upper";
    case Rel::Ext: return "ext";
    case Rel::Full: return "full";
    case Rel::None: return "none";
  }
  return "?";
}

int SpaceSignature::dim(Space s) const {
  switch (s) {
    case Space::R: return n0;
    case Space::X: return nx;
    case Space::Y: return ny;
    case Space::XY: return n2;
  }
  return 0;
}

int& SpaceSignature::dim(Space s) {
  switch (s) {
    case Space::R: return n0;
    case Space::X: return nx;
    case Space::Y: return ny;
    case Space::XY: return n2;
  }
  return n0;
}

bool rel_allowed(Rel r, bool out_has, bool in_has) {
  if (out_has && in_has) return r == Rel::Mult || r == Rel::Lower || r == Rel::Upper;
  if (out_has) return r == Rel::Ext;
  if (in_has) return r == Rel::Full;
  return r == Rel::None;
}

BlockPiOp::BlockPiOp(SpaceSignature out_sig, SpaceSignature in_sig)
    : out_sig_(out_sig), in_sig_(in_sig) {
  for (Space s : kSpaces) {
    if (out_sig.dim(s) < 0 || in_sig.dim(s) < 0) throw SignatureError("negative dimension");
  }
}

BlockPiOp BlockPiOp::identity(SpaceSignature sig) {
  BlockPiOp op(sig, sig);
  for (Space s : kSpaces) {
    const int n = sig.dim(s);
    if (n == 0) continue;
    const Rel rx = has_x(s) ? Rel::Mult : Rel::None;
    const Rel ry = has_y(s) ? Rel::Mult : Rel::None;
    op.add_term(s, s, rx, ry, PolyKernel::identity(n));
  }
  return op;
}

BlockPiOp BlockPiOp::multiplier(const PolyKernel& k) {
  return plane_term(Rel::Mult, Rel::Mult, k);
}

BlockPiOp BlockPiOp::plane_term(Rel rx, Rel ry, const PolyKernel& k) {
  BlockPiOp op(SpaceSignature::plane(k.rows()), SpaceSignature::plane(k.cols()));
  op.add_term(Space::XY, Space::XY, rx, ry, k);
  return op;
}

const Block& BlockPiOp::block(Space out, Space in) const { return blocks_[sidx(out)][sidx(in)]; }

PolyKernel BlockPiOp::term(Space out, Space in, Rel rx, Rel ry) const {
  const Block& b = block(out, in);
  auto it = b.find({rx, ry});
  if (it == b.end()) return PolyKernel(out_sig_.dim(out), in_sig_.dim(in));
  return it->second;
}

void BlockPiOp::add_term(Space out, Space in, Rel rx, Rel ry, const PolyKernel& k) {
  if (k.rows() != out_sig_.dim(out) || k.cols() != in_sig_.dim(in)) {
    throw SignatureError("BlockPiOp::add_term: kernel shape does not match signature for " +
                         space_name(out) + " <- " + space_name(in));
  }
  if (!rel_allowed(rx, has_x(out), has_x(in)) || !rel_allowed(ry, has_y(out), has_y(in))) {
    throw StructureError("BlockPiOp::add_term: relation (" + rel_name(rx) + "," + rel_name(ry) +
                         ") not valid for " + space_name(out) + " <- " + space_name(in));
  }
  if (!allowed_vars(k, rx, ry)) {
    throw StructureError("BlockPiOp::add_term: kernel depends on variables not allowed for (" +
                         rel_name(rx) + "," + rel_name(ry) + "): " + k.to_string());
  }
  if (k.is_zero()) return;
  Block& b = blocks_[sidx(out)][sidx(in)];
  auto it = b.find({rx, ry});
  if (it == b.end()) {
    b.emplace(RelPair{rx, ry}, k);
    return;
  }
  it->second += k;
  if (it->second.is_zero()) b.erase(it);
}

bool BlockPiOp::is_zero() const { return num_terms() == 0; }

std::size_t BlockPiOp::num_terms() const {
  std::size_t n = 0;
  for (const auto& row : blocks_) {
    for (const auto& b : row) n += b.size();
  }
  return n;
}

int BlockPiOp::max_total_degree() const {
  int d = 0;
  for (const auto& row : blocks_) {
    for (const auto& b : row) {
      for (const auto& [r, k] : b) d = std::max(d, k.total_degree());
    }
  }
  return d;
}

double BlockPiOp::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& row : blocks_) {
    for (const auto& b : row) {
      for (const auto& [r, k] : b) m = std::max(m, k.max_abs_coeff());
    }
  }
  return m;
}

BlockPiOp BlockPiOp::pruned(double tol) const {
  BlockPiOp r(out_sig_, in_sig_);
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : block(so, si)) r.add_term(so, si, rp.first, rp.second, k.pruned(tol));
    }
  }
  return r;
}

bool BlockPiOp::approx_equal(const BlockPiOp& o, double tol) const {
  if (!(out_sig_ == o.out_sig_) || !(in_sig_ == o.in_sig_)) return false;
  return (*this - o).max_abs_coeff() <= tol;
}

bool BlockPiOp::operator==(const BlockPiOp& o) const {
  if (!(out_sig_ == o.out_sig_) || !(in_sig_ == o.in_sig_)) return false;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (blocks_[i][j] != o.blocks_[i][j]) return false;
    }
  }
  return true;
}

BlockPiOp& BlockPiOp::operator+=(const BlockPiOp& o) {
  if (!(out_sig_ == o.out_sig_) || !(in_sig_ == o.in_sig_)) {
    throw SignatureError("pi_add: signature mismatch");
  }
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : o.block(so, si)) add_term(so, si, rp.first, rp.second, k);
    }
  }
  return *this;
}

BlockPiOp BlockPiOp::operator+(const BlockPiOp& o) const {
  BlockPiOp r = *this;
  r += o;
  return r;
}

BlockPiOp BlockPiOp::operator-(const BlockPiOp& o) const { return *this + o * -1.0; }

BlockPiOp BlockPiOp::operator*(double s) const {
  BlockPiOp r(out_sig_, in_sig_);
  if (s == 0.0) return r;
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : block(so, si)) r.add_term(so, si, rp.first, rp.second, k * s);
    }
  }
  return r;
}

BlockPiOp BlockPiOp::left_mul(Space out, const Eigen::MatrixXd& m) const {
  if (m.cols() != out_sig_.dim(out)) throw SignatureError("left_mul: dimension mismatch");
  SpaceSignature sig = out_sig_;
  sig.dim(out) = static_cast<int>(m.rows());
  BlockPiOp r(sig, in_sig_);
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : block(so, si)) {
        r.add_term(so, si, rp.first, rp.second, so == out ? k.left_mul(m) : k);
      }
    }
  }
  return r;
}

std::string BlockPiOp::describe() const {
  std::ostringstream os;
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : block(so, si)) {
        os << space_name(so) << " <- " << space_name(si) << " [" << rel_name(rp.first) << ","
           << rel_name(rp.second) << "]: " << k.to_string() << "\n";
      }
    }
  }
  return os.str();
}

FunctionVector::FunctionVector(SpaceSignature s) : sig(s) {
  for (Space sp : kSpaces) comp[sidx(sp)] = PolyKernel(s.dim(sp), 1);
}

FunctionVector FunctionVector::plane(const PolyKernel& f) {
  FunctionVector v(SpaceSignature::plane(f.rows()));
  v[Space::XY] = f;
  return v;
}

bool FunctionVector::approx_equal(const FunctionVector& o, double tol) const {
  if (!(sig == o.sig)) return false;
  return (*this - o).max_abs_coeff() <= tol;
}

FunctionVector FunctionVector::operator-(const FunctionVector& o) const {
  if (!(sig == o.sig)) throw SignatureError("FunctionVector: signature mismatch");
  FunctionVector r(sig);
  for (Space s : kSpaces) r[s] = (*this)[s] - o[s];
  return r;
}

double FunctionVector::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& c : comp) m = std::max(m, c.max_abs_coeff());
  return m;
}

BlockPiOp pi_add(const BlockPiOp& a, const BlockPiOp& b) { return a + b; }
BlockPiOp pi_scale(const BlockPiOp& a, double s) { return a * s; }

BlockPiOp pi_compose(const BlockPiOp& a, const BlockPiOp& b) {
  if (!(a.in_sig() == b.out_sig())) throw SignatureError("pi_compose: inner signature mismatch");
  BlockPiOp r(a.out_sig(), b.in_sig());
  const auto pa = rename_a();
  const auto pb = rename_b();
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      if (r.out_sig().dim(so) == 0 || r.in_sig().dim(si) == 0) continue;
      std::map<RelPair, PolyKernel> acc;
      for (Space sm : kSpaces) {
        const Block& ba = a.block(so, sm);
        const Block& bb = b.block(sm, si);
        if (ba.empty() || bb.empty()) continue;
        std::vector<std::pair<RelPair, PolyKernel>> bren;
        for (const auto& [rpb, kb] : bb) bren.emplace_back(rpb, kb.rename(pb));
        for (const auto& [rpa, ka] : ba) {
          const PolyKernel kar = ka.rename(pa);
          for (const auto& [rpb, kbr] : bren) {
            const PolyKernel prod = kar * kbr;
            if (prod.is_zero()) continue;
            const auto sx = compose_rule(rpa.first, rpb.first);
            const auto sy = compose_rule(rpa.second, rpb.second);
            for (const auto& stx : sx) {
              const PolyKernel px = apply_step(prod, stx, kCx);
              for (const auto& sty : sy) {
                PolyKernel k = apply_step(px, sty, kCy);
                const RelPair key{stx.result, sty.result};
                auto it = acc.find(key);
                if (it == acc.end()) {
                  acc.emplace(key, std::move(k));
                } else {
                  it->second += k;
                }
              }
            }
          }
        }
      }
      for (const auto& [rp, k] : acc) r.add_term(so, si, rp.first, rp.second, k);
    }
  }
  return r;
}

BlockPiOp pi_adjoint(const BlockPiOp& op) {
  BlockPiOp r(op.in_sig(), op.out_sig());
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : op.block(so, si)) {
        PolyKernel kt = k.transpose();
        if (rp.first != Rel::Mult) kt = kt.swap_vars(Var::X, Var::Theta);
        if (rp.second != Rel::Mult) kt = kt.swap_vars(Var::Y, Var::Eta);
        r.add_term(si, so, adjoint_rel(rp.first), adjoint_rel(rp.second), kt);
      }
    }
  }
  return r;
}

FunctionVector pi_apply(const BlockPiOp& op, const FunctionVector& f) {
  if (!(f.sig == op.in_sig())) throw SignatureError("pi_apply: input signature mismatch");
  auto to_in = identity_perm();
  to_in[static_cast<int>(Var::X)] = Var::Theta;
  to_in[static_cast<int>(Var::Y)] = Var::Eta;
  FunctionVector out(op.out_sig());
  for (Space si : kSpaces) {
    if (f[si].is_zero()) continue;
    const PolyKernel g = f[si].rename(to_in);
    for (Space so : kSpaces) {
      for (const auto& [rp, k] : op.block(so, si)) {
        PolyKernel h = k * g;
        auto reduce = [&](Rel r, const Coord& c) {
          switch (r) {
            case Rel::Mult:
              h = h.subs(c.in, Limit::variable(c.out));
              break;
            case Rel::Lower:
              h = h.integrate(c.in, Limit::constant(0.0), Limit::variable(c.out));
              break;
            case Rel::Upper:
              h = h.integrate(c.in, Limit::variable(c.out), Limit::constant(1.0));
              break;
            case Rel::Full:
              h = h.integrate(c.in, Limit::constant(0.0), Limit::constant(1.0));
              break;
            case Rel::Ext:
            case Rel::None:
              break;
          }
        };
        reduce(rp.first, kCx);
        reduce(rp.second, kCy);
        out[so] += h;
      }
    }
  }
  return out;
}

BlockPiOp differentiate(const BlockPiOp& op, Var axis) {
  if (axis != Var::X && axis != Var::Y) throw std::invalid_argument("differentiate: axis must be x or y");
  const bool along_x = axis == Var::X;
  const Coord& c = along_x ? kCx : kCy;
  const double tol = structural_tol(op);
  BlockPiOp r(op.out_sig(), op.in_sig());
  for (Space so : kSpaces) {
    if (along_x ? !has_x(so) : !has_y(so)) continue;
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : op.block(so, si)) {
        const Rel rel = rel_of(rp, along_x);
        auto with = [&](Rel nr) { return along_x ? RelPair{nr, rp.second} : RelPair{rp.first, nr}; };
        auto put = [&](Rel nr, const PolyKernel& nk) {
          const RelPair p = with(nr);
          r.add_term(so, si, p.first, p.second, nk);
        };
        switch (rel) {
          case Rel::Mult:
            if (k.max_abs_coeff() > tol) {
              throw StructureError("differentiate: derivative of a multiplier term is not a PI operator");
            }
            break;
          case Rel::Lower:
            put(Rel::Mult, k.subs(c.in, Limit::variable(c.out)).pruned(tol));
            put(Rel::Lower, k.diff(c.out));
            break;
          case Rel::Upper:
            put(Rel::Mult, (-k.subs(c.in, Limit::variable(c.out))).pruned(tol));
            put(Rel::Upper, k.diff(c.out));
            break;
          case Rel::Ext:
            put(Rel::Ext, k.diff(c.out));
            break;
          default:
            break;
        }
      }
    }
  }
  return r;
}

BlockPiOp diff_compose(const BlockPiOp& t, int k, int l) {
  if (k < 0 || k > 2 || l < 0 || l > 2) throw std::invalid_argument("diff_compose: orders must lie in 0..2");
  if (!(t.out_sig() == SpaceSignature::plane(t.out_sig().n2)) ||
      !(t.in_sig() == SpaceSignature::plane(t.in_sig().n2))) {
    throw StructureError("diff_compose: expects a 2D -> 2D operator");
  }
  const double tol = structural_tol(t);
  for (const auto& [rp, kern] : t.block(Space::XY, Space::XY)) {
    if ((rp.first == Rel::Mult || rp.second == Rel::Mult) && kern.max_abs_coeff() > tol) {
      throw StructureError("diff_compose: R00, R0j and Ri0 must vanish");
    }
  }
  BlockPiOp r = t;
  for (int i = 0; i < k; ++i) r = differentiate(r, Var::X);
  for (int j = 0; j < l; ++j) r = differentiate(r, Var::Y);
  return r;
}

namespace {

BlockPiOp trace_one(const BlockPiOp& op, bool along_x, int endpoint) {
  if (endpoint != 0 && endpoint != 1) throw std::invalid_argument("dirac_compose: endpoint must be 0 or 1");
  const SpaceSignature& os = op.out_sig();
  SpaceSignature ns;
  if (along_x) {
    if (os.n0 != 0 || os.ny != 0) throw SignatureError("dirac_compose: output must carry x");
    ns = {os.nx, 0, os.n2, 0};
  } else {
    if (os.n0 != 0 || os.nx != 0) throw SignatureError("dirac_compose: output must carry y");
    ns = {os.ny, os.n2, 0, 0};
  }
  const Coord& c = along_x ? kCx : kCy;
  const double tol = structural_tol(op);
  const double e = static_cast<double>(endpoint);
  BlockPiOp r(ns, op.in_sig());
  for (Space so : kSpaces) {
    if (os.dim(so) == 0) continue;
    Space target;
    if (along_x) {
      target = so == Space::XY ? Space::Y : Space::R;
    } else {
      target = so == Space::XY ? Space::X : Space::R;
    }
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : op.block(so, si)) {
        const Rel rel = rel_of(rp, along_x);
        auto put = [&](Rel nr, const PolyKernel& nk) {
          if (along_x) {
            r.add_term(target, si, nr, rp.second, nk);
          } else {
            r.add_term(target, si, rp.first, nr, nk);
          }
        };
        switch (rel) {
          case Rel::Mult:
            if (k.max_abs_coeff() > tol) {
              throw StructureError("dirac_compose: trace of a multiplier term is not a PI operator");
            }
            break;
          case Rel::Lower:
            if (endpoint == 1) put(Rel::Full, k.subs(c.out, Limit::constant(1.0)));
            break;
          case Rel::Upper:
            if (endpoint == 0) put(Rel::Full, k.subs(c.out, Limit::constant(0.0)));
            break;
          case Rel::Ext:
            put(Rel::None, k.subs(c.out, Limit::constant(e)));
            break;
          default:
            break;
        }
      }
    }
  }
  return r;
}

}  // namespace

BlockPiOp dirac_compose(const BlockPiOp& op, TraceAxis axis, int k, int l) {
  switch (axis) {
    case TraceAxis::X:
      return trace_one(op, true, k);
    case TraceAxis::Y:
      return trace_one(op, false, l);
    case TraceAxis::Both:
      return trace_one(trace_one(op, true, k), false, l);
  }
  return op;
}

BlockPiOp embed(const BlockPiOp& op, SpaceSignature out_sig, std::array<int, 4> out_offset,
                SpaceSignature in_sig, std::array<int, 4> in_offset) {
  BlockPiOp r(out_sig, in_sig);
  for (Space so : kSpaces) {
    for (Space si : kSpaces) {
      for (const auto& [rp, k] : op.block(so, si)) {
        PolyKernel big(out_sig.dim(so), in_sig.dim(si));
        big.set_block(out_offset[sidx(so)], in_offset[sidx(si)], k);
        r.add_term(so, si, rp.first, rp.second, big);
      }
    }
  }
  return r;
}

BlockPiOp vstack(const std::vector<BlockPiOp>& parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: nothing to stack");
  SpaceSignature out{};
  for (const auto& p : parts) {
    if (!(p.in_sig() == parts.front().in_sig())) throw SignatureError("vstack: input signature mismatch");
    for (Space s : kSpaces) out.dim(s) += p.out_sig().dim(s);
  }
  BlockPiOp r(out, parts.front().in_sig());
  std::array<int, 4> off{};
  for (const auto& p : parts) {
    r += embed(p, out, off, p.in_sig(), {0, 0, 0, 0});
    for (Space s : kSpaces) off[sidx(s)] += p.out_sig().dim(s);
  }
  return r;
}

namespace {

struct Node {
  double pos;
  double w;
};

std::vector<Node> coordinate_nodes(Rel r, double out, int order) {
  auto from_rule = [](const GaussRule& g) {
    std::vector<Node> n;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) n.push_back({g.nodes[i], g.weights[i]});
    return n;
  };
  switch (r) {
    case Rel::Mult: return {{out, 1.0}};
    case Rel::Lower: return from_rule(gauss_legendre(order, 0.0, out));
    case Rel::Upper: return from_rule(gauss_legendre(order, out, 1.0));
    case Rel::Full: return from_rule(gauss_legendre(order, 0.0, 1.0));
    case Rel::Ext:
    case Rel::None: return {{0.0, 1.0}};
  }
  return {};
}

}  // namespace

Eigen::VectorXd pi_apply_numeric(const BlockPiOp& op, const SampledFunction& f, Space out_space,
                                 double x, double y, int order) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(op.out_sig().dim(out_space));
  for (Space si : kSpaces) {
    for (const auto& [rp, k] : op.block(out_space, si)) {
      const auto nx = coordinate_nodes(rp.first, x, order);
      const auto ny = coordinate_nodes(rp.second, y, order);
      for (const auto& a : nx) {
        for (const auto& b : ny) {
          const Point p{x, y, a.pos, b.pos, 0.0, 0.0};
          // Mult relations take the input at the output point.
          out += a.w * b.w * (k.eval(p) * f(si, a.pos, b.pos));
        }
      }
    }
  }
  return out;
}

double inner_product(const FunctionVector& a, const FunctionVector& b) {
  if (!(a.sig == b.sig)) throw SignatureError("inner_product: signature mismatch");
  double s = 0.0;
  for (Space sp : kSpaces) {
    if (a.sig.dim(sp) == 0) continue;
    PolyKernel p = a[sp].transpose() * b[sp];
    if (has_x(sp)) p = p.integrate(Var::X, Limit::constant(0.0), Limit::constant(1.0));
    if (has_y(sp)) p = p.integrate(Var::Y, Limit::constant(0.0), Limit::constant(1.0));
    s += p.eval(Point{})(0, 0);
  }
  return s;
}

}  // namespace pie
