#include "pie/serialize.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pie/quadrature.hpp"

namespace pie {

using Eigen::MatrixXd;

namespace {

constexpr std::array<const char*, 6> kRelTags = {"mult", "lower", "upper", "ext", "full", "none"};
constexpr std::array<const char*, 4> kSpaceTags = {"R", "X", "Y", "XY"};
constexpr std::array<const char*, 2> kAxisTags = {"x", "y"};

template <std::size_t N>
int tag_index(const std::array<const char*, N>& tags, const Json& j, const char* what) {
  if (!j.is_string()) throw FormatError(std::string(what) + ": expected a string");
  const std::string s = j.get<std::string>();
  for (std::size_t i = 0; i < N; ++i) {
    if (s == tags[i]) return static_cast<int>(i);
  }
  throw FormatError(std::string(what) + ": unknown tag '" + s + "'");
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::type_error& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

Json sig_to_json(const SpaceSignature& s) { return Json::array({s.n0, s.nx, s.ny, s.n2}); }

SpaceSignature sig_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("signature: expected [n0, nx, ny, n2]");
  SpaceSignature s{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  if (s.n0 < 0 || s.nx < 0 || s.ny < 0 || s.n2 < 0) throw FormatError("signature: negative dimension");
  return s;
}

void kernel_grid_from_json(const Json& j, std::array<std::array<PolyKernel, 3>, 3>& grid, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected an object keyed by derivative orders");
  for (const auto& [key, val] : j.items()) {
    if (key.size() != 2 || key[0] < '0' || key[0] > '2' || key[1] < '0' || key[1] > '2') {
      throw FormatError(std::string(what) + ": bad derivative order key '" + key + "'");
    }
    grid[key[0] - '0'][key[1] - '0'] = kernel_from_json(val);
  }
}

Json samples(const GaussRule& g, const MatrixField& f) {
  Json out = Json::array();
  for (double x : g.nodes) {
    for (double y : g.nodes) out.push_back(matrix_to_json(f(x, y)));
  }
  return out;
}

double max_sample_error(const GaussRule& g, const Json& stored, const MatrixField& f) {
  if (!stored.is_array() || stored.size() != g.nodes.size() * g.nodes.size()) {
    throw FormatError("gain: sample count does not match the grid");
  }
  double err = 0.0;
  std::size_t k = 0;
  for (double x : g.nodes) {
    for (double y : g.nodes) {
      const MatrixXd s = matrix_from_json(stored[k++]);
      const MatrixXd v = f(x, y);
      if (s.rows() != v.rows() || s.cols() != v.cols()) throw FormatError("gain: sample shape mismatch");
      if (v.size() > 0) err = std::max(err, (s - v).cwiseAbs().maxCoeff() / std::max(1.0, v.cwiseAbs().maxCoeff()));
    }
  }
  return err;
}

}  // namespace

Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t pos = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
    const std::size_t nl = text.rfind('\n', pos > 0 ? pos - 1 : 0);
    const std::size_t col = nl == std::string::npos || pos == 0 ? pos + 1 : pos - nl;
    std::ostringstream os;
    os << source << ":" << line << ":" << col << ": JSON parse error";
    throw FormatError(os.str());
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

Json matrix_to_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(std::move(r));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

MatrixXd matrix_from_json(const Json& j) {
  const int r = get<int>(j, "rows");
  const int c = get<int>(j, "cols");
  const Json& d = field(j, "data");
  if (r < 0 || c < 0 || !d.is_array() || d.size() != static_cast<std::size_t>(r)) {
    throw FormatError("matrix: row count does not match");
  }
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    if (!d[i].is_array() || d[i].size() != static_cast<std::size_t>(c)) throw FormatError("matrix: ragged rows");
    for (int k = 0; k < c; ++k) m(i, k) = d[i][k].get<double>();
  }
  return m;
}

Json kernel_to_json(const PolyKernel& k) {
  Json terms = Json::array();
  for (const auto& [e, c] : k.terms()) {
    Json exp = Json::array();
    for (auto v : e) exp.push_back(static_cast<int>(v));
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      for (Eigen::Index m = 0; m < c.cols(); ++m) {
        if (c(i, m) != 0.0) terms.push_back({{"exp", exp}, {"row", i}, {"col", m}, {"coeff", c(i, m)}});
      }
    }
  }
  return {{"rows", k.rows()}, {"cols", k.cols()}, {"terms", terms}};
}

PolyKernel kernel_from_json(const Json& j) {
  const int r = get<int>(j, "rows");
  const int c = get<int>(j, "cols");
  if (r < 0 || c < 0) throw FormatError("kernel: negative dimension");
  PolyKernel k(r, c);
  const Json& terms = field(j, "terms");
  if (!terms.is_array()) throw FormatError("kernel: terms must be an array");
  for (const Json& t : terms) {
    const Json& ej = field(t, "exp");
    if (!ej.is_array() || ej.size() != kNumVars) throw FormatError("kernel: exponent must have 6 entries");
    Exponent e{};
    for (int v = 0; v < kNumVars; ++v) {
      const int p = ej[v].get<int>();
      if (p < 0 || p > kMaxDegreePerVar) throw FormatError("kernel: exponent out of range");
      e[v] = static_cast<std::uint8_t>(p);
    }
    const int i = get<int>(t, "row");
    const int m = get<int>(t, "col");
    if (i < 0 || i >= r || m < 0 || m >= c) throw FormatError("kernel: entry index out of range");
    MatrixXd coeff = MatrixXd::Zero(r, c);
    coeff(i, m) = get<double>(t, "coeff");
    k.add_term(e, coeff);
  }
  return k;
}

Json op_to_json(const BlockPiOp& op) {
  Json blocks = Json::array();
  for (Space out : kSpaces) {
    for (Space in : kSpaces) {
      if (op.out_sig().dim(out) == 0 || op.in_sig().dim(in) == 0) continue;
      for (const auto& [rp, k] : op.block(out, in)) {
        if (k.is_zero()) continue;
        blocks.push_back({{"out", kSpaceTags[static_cast<int>(out)]},
                          {"in", kSpaceTags[static_cast<int>(in)]},
                          {"rx", kRelTags[static_cast<int>(rp.first)]},
                          {"ry", kRelTags[static_cast<int>(rp.second)]},
                          {"kernel", kernel_to_json(k)}});
      }
    }
  }
  return {{"out_sig", sig_to_json(op.out_sig())}, {"in_sig", sig_to_json(op.in_sig())}, {"blocks", blocks}};
}

BlockPiOp op_from_json(const Json& j) {
  BlockPiOp op(sig_from_json(field(j, "out_sig")), sig_from_json(field(j, "in_sig")));
  const Json& blocks = field(j, "blocks");
  if (!blocks.is_array()) throw FormatError("operator: blocks must be an array");
  for (const Json& b : blocks) {
    const auto out = static_cast<Space>(tag_index(kSpaceTags, field(b, "out"), "operator block out"));
    const auto in = static_cast<Space>(tag_index(kSpaceTags, field(b, "in"), "operator block in"));
    const auto rx = static_cast<Rel>(tag_index(kRelTags, field(b, "rx"), "operator block rx"));
    const auto ry = static_cast<Rel>(tag_index(kRelTags, field(b, "ry"), "operator block ry"));
    try {
      op.add_term(out, in, rx, ry, kernel_from_json(field(b, "kernel")));
    } catch (const FormatError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("operator: ") + e.what());
    }
  }
  return op;
}

Json pde_to_json(const PdeSystem& p) {
  Json a = Json::object();
  Json c = Json::object();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      const std::string key = std::to_string(i) + std::to_string(k);
      if (!p.A[i][k].is_zero()) a[key] = kernel_to_json(p.A[i][k]);
      if (!p.C[i][k].is_zero()) c[key] = kernel_to_json(p.C[i][k]);
    }
  }
  Json bc = Json::array();
  for (int ax = 0; ax < 2; ++ax) {
    for (const auto& cond : p.bc.axis[ax]) {
      Json terms = Json::array();
      for (const auto& t : cond.terms) {
        terms.push_back({{"endpoint", t.endpoint}, {"order", t.order}, {"coeff", matrix_to_json(t.coeff)}});
      }
      bc.push_back({{"axis", kAxisTags[ax]}, {"terms", terms}});
    }
  }
  const SensingSpec& s = p.sensing;
  Json sensing = {{"nq1", s.nq1},
                  {"nq2", s.nq2},
                  {"nq3", s.nq3},
                  {"C1", matrix_to_json(s.C1)},
                  {"C2", kernel_to_json(s.C2)},
                  {"C3", kernel_to_json(s.C3)},
                  {"D1", matrix_to_json(s.D1)},
                  {"D2", kernel_to_json(s.D2)},
                  {"D3", kernel_to_json(s.D3)}};
  return {{"kind", "pde"},
          {"n_u", p.n_u},
          {"n_w", p.n_w},
          {"n_z", p.n_z},
          {"A", a},
          {"B", kernel_to_json(p.B)},
          {"C", c},
          {"D", matrix_to_json(p.D)},
          {"bc", bc},
          {"sensing", sensing}};
}

PdeSystem pde_from_json(const Json& j) {
  PdeSystem p = PdeSystem::zeros(get<int>(j, "n_u"), get<int>(j, "n_w"), get<int>(j, "n_z"));
  if (p.n_u <= 0 || p.n_w < 0 || p.n_z < 0) throw FormatError("pde: invalid dimensions");
  if (j.contains("A")) kernel_grid_from_json(j.at("A"), p.A, "A");
  if (j.contains("C")) kernel_grid_from_json(j.at("C"), p.C, "C");
  if (j.contains("B")) p.B = kernel_from_json(j.at("B"));
  if (j.contains("D")) p.D = matrix_from_json(j.at("D"));
  if (j.contains("bc")) {
    const Json& bc = j.at("bc");
    if (!bc.is_array()) throw FormatError("bc: expected an array of conditions");
    std::array<int, 2> count{0, 0};
    for (const Json& cj : bc) {
      const int ax = tag_index(kAxisTags, field(cj, "axis"), "bc axis");
      if (count[ax] == 2) throw FormatError(std::string("bc: more than two conditions on axis ") + kAxisTags[ax]);
      BoundaryCondition cond;
      for (const Json& t : field(cj, "terms")) {
        BoundaryTerm bt;
        bt.endpoint = get<int>(t, "endpoint");
        bt.order = get<int>(t, "order");
        bt.coeff = matrix_from_json(field(t, "coeff"));
        cond.terms.push_back(bt);
      }
      p.bc.axis[ax][count[ax]++] = cond;
    }
    if (count[0] != 2 || count[1] != 2) throw FormatError("bc: exactly two conditions per axis are required");
  }
  if (j.contains("sensing")) {
    const Json& sj = j.at("sensing");
    SensingSpec& s = p.sensing;
    s.nq1 = get<int>(sj, "nq1");
    s.nq2 = get<int>(sj, "nq2");
    s.nq3 = get<int>(sj, "nq3");
    s.C1 = matrix_from_json(field(sj, "C1"));
    s.C2 = kernel_from_json(field(sj, "C2"));
    s.C3 = kernel_from_json(field(sj, "C3"));
    s.D1 = matrix_from_json(field(sj, "D1"));
    s.D2 = kernel_from_json(field(sj, "D2"));
    s.D3 = kernel_from_json(field(sj, "D3"));
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("pde: ") + e.what());
  }
  return p;
}

Json pie_to_json(const PieSystem& p) {
  Json orders = Json::array();
  for (const auto& o : p.state_orders) orders.push_back({o[0], o[1]});
  return {{"kind", "pie"},           {"T", op_to_json(p.T)},   {"A", op_to_json(p.A)},
          {"B", op_to_json(p.B)},    {"C", op_to_json(p.C)},   {"D", op_to_json(p.D)},
          {"Cq", op_to_json(p.Cq)},  {"Dq", op_to_json(p.Dq)}, {"state_orders", orders}};
}

PieSystem pie_from_json(const Json& j) {
  PieSystem p;
  p.T = op_from_json(field(j, "T"));
  p.A = op_from_json(field(j, "A"));
  p.B = op_from_json(field(j, "B"));
  p.C = op_from_json(field(j, "C"));
  p.D = op_from_json(field(j, "D"));
  p.Cq = op_from_json(field(j, "Cq"));
  p.Dq = op_from_json(field(j, "Dq"));
  for (const Json& o : get_or<Json>(j, "state_orders", Json::array())) {
    if (!o.is_array() || o.size() != 2) throw FormatError("state_orders: expected pairs");
    p.state_orders.push_back({o[0].get<int>(), o[1].get<int>()});
  }
  const SpaceSignature plane = SpaceSignature::plane(p.n_u());
  const bool ok = p.T.in_sig() == plane && p.T.out_sig() == plane && p.A.in_sig() == plane &&
                  p.A.out_sig() == plane && p.B.out_sig() == plane && p.C.in_sig() == plane &&
                  p.Cq.in_sig() == plane && p.D.in_sig() == p.B.in_sig() && p.D.out_sig() == p.C.out_sig() &&
                  p.Dq.in_sig() == p.B.in_sig() && p.Dq.out_sig() == p.Cq.out_sig();
  if (!ok) throw FormatError("pie: operator signatures are inconsistent");
  return p;
}

Json evaluable_to_json(const EvaluableOp& op) {
  const GaussRule g = gauss_legendre(op.order());
  return {{"n", op.n()},
          {"order", op.order()},
          {"nodes", g.nodes},
          {"core", matrix_to_json(op.core())},
          {"multiplier", samples(g, [&](double x, double y) { return op.multiplier(x, y); })},
          {"left", samples(g, [&](double x, double y) { return op.left(x, y); })},
          {"right", samples(g, [&](double x, double y) { return op.right(x, y); })}};
}

Json gain_to_json(const GainArtifact& g) {
  const LpiOptions& o = g.options;
  Json opts = {{"d1", o.d1}, {"d2", o.d2}, {"d3", o.d3}, {"eps", o.eps}};
  opts["gamma_fixed"] = o.gamma ? Json(*o.gamma) : Json(nullptr);
  return {{"kind", "gain"}, {"gamma", g.gamma},           {"options", opts},
          {"P", op_to_json(g.P)}, {"W", op_to_json(g.W)}, {"P_inverse", evaluable_to_json(g.p_inv)}};
}

GainArtifact gain_from_json(const Json& j, double sample_tol) {
  GainArtifact g;
  g.gamma = get<double>(j, "gamma");
  const Json& o = field(j, "options");
  g.options.d1 = get<int>(o, "d1");
  g.options.d2 = get<int>(o, "d2");
  g.options.d3 = get<int>(o, "d3");
  g.options.eps = get<double>(o, "eps");
  if (o.contains("gamma_fixed") && !o.at("gamma_fixed").is_null()) g.options.gamma = o.at("gamma_fixed").get<double>();
  g.P = op_from_json(field(j, "P"));
  g.W = op_from_json(field(j, "W"));
  const Json& inv = field(j, "P_inverse");
  try {
    g.p_inv = invert(separate(g.P));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("gain: P is not separable: ") + e.what());
  } catch (const InversionError& e) {
    throw FormatError(std::string("gain: ") + e.what());
  }
  if (get<int>(inv, "order") != g.p_inv.order()) throw FormatError("gain: stored inverse grid order differs from P");
  const GaussRule rule = gauss_legendre(g.p_inv.order());
  const double err = std::max({max_sample_error(rule, field(inv, "multiplier"),
                                                [&](double x, double y) { return g.p_inv.multiplier(x, y); }),
                               max_sample_error(rule, field(inv, "left"),
                                                [&](double x, double y) { return g.p_inv.left(x, y); }),
                               max_sample_error(rule, field(inv, "right"),
                                                [&](double x, double y) { return g.p_inv.right(x, y); })});
  const MatrixXd core = matrix_from_json(field(inv, "core"));
  const double core_err = core.rows() == g.p_inv.core().rows() && core.cols() == g.p_inv.core().cols()
                              ? (core.size() > 0 ? (core - g.p_inv.core()).cwiseAbs().maxCoeff() /
                                                       std::max(1.0, core.cwiseAbs().maxCoeff())
                                                 : 0.0)
                              : 1e300;
  if (std::max(err, core_err) > sample_tol) {
    std::ostringstream os;
    os << "gain: stored inverse disagrees with P (relative error " << std::max(err, core_err) << ")";
    throw FormatError(os.str());
  }
  return g;
}

SimConfig SimSpec::config() const {
  SimConfig c;
  c.dt = dt;
  c.t_final = t_final;
  c.output_every = output_every;
  c.noise = noise;
  if (disturbance == "damped_sine") {
    c.w = damped_sine(w_amplitude, w_decay, w_freq);
  } else if (disturbance != "zero") {
    throw FormatError("sim: unknown disturbance '" + disturbance + "'");
  }
  if (initial == "heat_example") {
    c.initial_error = heat_initial_error(u_amplitude);
  } else if (initial != "zero") {
    throw FormatError("sim: unknown initial state '" + initial + "'");
  }
  return c;
}

Json sim_to_json(const SimSpec& s) {
  return {{"kind", "sim"},
          {"degree", s.degree},
          {"dt", s.dt},
          {"t_final", s.t_final},
          {"output_every", s.output_every},
          {"noise", {{"mean", s.noise.mean}, {"variance", s.noise.variance}, {"seed", s.noise.seed}}},
          {"disturbance", {{"type", s.disturbance}, {"amplitude", s.w_amplitude}, {"decay", s.w_decay}, {"freq", s.w_freq}}},
          {"initial", {{"type", s.initial}, {"amplitude", s.u_amplitude}}}};
}

SimSpec sim_from_json(const Json& j) {
  SimSpec s;
  s.degree = get_or(j, "degree", s.degree);
  s.dt = get_or(j, "dt", s.dt);
  s.t_final = get_or(j, "t_final", s.t_final);
  s.output_every = get_or(j, "output_every", s.output_every);
  if (j.contains("noise")) {
    const Json& n = j.at("noise");
    s.noise.mean = get_or(n, "mean", s.noise.mean);
    s.noise.variance = get_or(n, "variance", s.noise.variance);
    s.noise.seed = get_or(n, "seed", s.noise.seed);
  }
  if (j.contains("disturbance")) {
    const Json& w = j.at("disturbance");
    s.disturbance = get_or(w, "type", s.disturbance);
    s.w_amplitude = get_or(w, "amplitude", s.w_amplitude);
    s.w_decay = get_or(w, "decay", s.w_decay);
    s.w_freq = get_or(w, "freq", s.w_freq);
  }
  if (j.contains("initial")) {
    const Json& u = j.at("initial");
    s.initial = get_or(u, "type", s.initial);
    s.u_amplitude = get_or(u, "amplitude", s.u_amplitude);
  }
  if (s.degree < 0) throw FormatError("sim: degree must be non-negative");
  s.config().validate();
  return s;
}

}  // namespace pie
