#include <CLI11.hpp>
#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pie/galerkin.hpp"
#include "pie/lpi.hpp"
#include "pie/oracles.hpp"
#include "pie/sdp.hpp"
#include "pie/serialize.hpp"

#ifndef PIE_VERSION
#define PIE_VERSION "unknown"
#endif

using namespace pie;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInvalidInput = 2, kSolveFailed = 3, kBlowUp = 4 };

/// Solver status or extraction failure that is not an input problem.
class SolveFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

/// Inputs and outputs of one command with their hashes; no timestamps so
/// that identical runs give identical manifests.
class Manifest {
 public:
  explicit Manifest(std::string command) { j_["command"] = std::move(command); }

  Json& params() { return j_["parameters"]; }
  void input(const std::string& path) { add("inputs", path); }
  void output(const std::string& path) { add("outputs", path); }

  void write(const std::string& path) {
    j_["toolkit_version"] = PIE_VERSION;
    write_text_file(path, j_.dump(2) + "\n");
    std::cout << "manifest: " << path << "\n";
  }

 private:
  void add(const char* key, const std::string& path) {
    j_[key].push_back({{"path", path}, {"sha256", sha256_hex(read_file(path))}});
  }
  Json j_;
};

std::string manifest_path(const std::string& flag, const std::string& primary) {
  return flag.empty() ? primary + ".manifest.json" : flag;
}

Json options_json(const LpiOptions& o) {
  Json j = {{"deg", {o.d1, o.d2, o.d3}}, {"eps", o.eps}};
  j["gamma"] = o.gamma ? Json(*o.gamma) : Json(nullptr);
  return j;
}

void print_result(const OracleResult& r) {
  std::printf("%-28s %s  cases %4d  max residual %.3e  tol %.0e%s%s\n", r.name.c_str(), r.passed() ? "PASS" : "FAIL",
              r.cases, r.max_residual, r.tol, r.note.empty() ? "" : "  ", r.note.c_str());
}

struct ExampleArgs {
  double r = 4.0;
  std::string pde_out = "pde.json";
  std::string sim_out;
};

int run_example(const ExampleArgs& a) {
  write_text_file(a.pde_out, pde_to_json(heat_estimation_example(a.r)).dump(2) + "\n");
  std::cout << "wrote " << a.pde_out << " (heat estimation example, r = " << a.r << ")\n";
  if (!a.sim_out.empty()) {
    SimSpec spec;
    spec.noise.variance = 0.04;
    write_text_file(a.sim_out, sim_to_json(spec).dump(2) + "\n");
    std::cout << "wrote " << a.sim_out << "\n";
  }
  return kOk;
}

struct ConvertArgs {
  std::string in;
  std::string out = "pie.json";
  std::string manifest;
  std::uint64_t seed = 1;
};

int run_convert(const ConvertArgs& a) {
  const PdeSystem pde = pde_from_json(read_json_file(a.in));
  const PieSystem pie = build_pie(pde);
  const std::string text = pie_to_json(pie).dump(2) + "\n";
  write_text_file(a.out, text);
  std::cout << "wrote " << a.out << "  state " << pie.n_u() << "  w " << pie.n_w() << "  z " << pie.n_z()
            << "  sensed " << pie.q_sig().n0 << "/" << pie.q_sig().nx << "/" << pie.q_sig().ny << "\n";

  bool ok = true;
  if (pde.n_u == 1) {
    const OracleResult r = check_fundamental_identities(pde.bc, a.seed);
    print_result(r);
    ok = ok && r.passed();
  }
  const OracleResult r = check_t_inverts_derivative(pie.T, a.seed);
  print_result(r);
  ok = ok && r.passed();

  Manifest m("convert");
  m.params() = {{"seed", a.seed}};
  m.input(a.in);
  m.output(a.out);
  m.write(manifest_path(a.manifest, a.out));
  return ok ? kOk : kFailure;
}

struct SolveArgs {
  std::string in;
  std::string out;
  std::string manifest;
  std::vector<int> deg{1, 2, 1};
  double eps = 1e-3;
  std::optional<double> gamma;
  double tol = 1e-8;
  bool verbose = false;
};

LpiOptions lpi_options(const SolveArgs& a) {
  if (a.deg.size() != 3) throw std::invalid_argument("--deg takes three integers");
  LpiOptions o;
  o.d1 = a.deg[0];
  o.d2 = a.deg[1];
  o.d3 = a.deg[2];
  o.eps = a.eps;
  o.gamma = a.gamma;
  o.verbose = a.verbose;
  return o;
}

LpiSolution solve_lpi(const LpiProblem& prob, const SolveArgs& a) {
  SdpOptions so;
  so.tol = a.tol;
  so.verbose = a.verbose;
  const SdpSolution raw = solve_sdp(prob.sdp, so);
  std::cout << "sdp: " << status_name(raw.status) << " after " << raw.iterations << " iterations";
  if (!raw.message.empty()) std::cout << " (" << raw.message << ")";
  std::cout << "\n";
  if (raw.status != SdpStatus::Optimal) throw SolveFailure("solver status " + status_name(raw.status));
  try {
    const LpiSolution sol = extract_solution(prob, raw, so.accept_tol);
    std::printf("residuals: primal %.2e  dual %.2e  gap %.2e  kernel matching %.2e\n", raw.primal_residual,
                raw.dual_residual, raw.gap, matching_residual(prob, sol).max_abs_coeff());
    return sol;
  } catch (const ExtractionError& e) {
    throw SolveFailure(e.what());
  }
}

int run_analyze(const SolveArgs& a) {
  const LpiOptions o = lpi_options(a);
  const PieSystem pie = pie_from_json(read_json_file(a.in));
  const LpiSolution sol = solve_lpi(assemble_gain_analysis_lmi(pie, o), a);
  std::printf("gamma %.10g\n", sol.gamma);
  if (!a.out.empty()) {
    Json j = {{"gamma", sol.gamma}, {"options", options_json(o)}, {"P", op_to_json(sol.P)}};
    write_text_file(a.out, j.dump(2) + "\n");
    Manifest m("analyze");
    m.params() = options_json(o);
    m.params()["tol"] = a.tol;
    m.input(a.in);
    m.output(a.out);
    m.write(manifest_path(a.manifest, a.out));
  }
  return kOk;
}

int run_synthesize(const SolveArgs& a) {
  const LpiOptions o = lpi_options(a);
  const PieSystem pie = pie_from_json(read_json_file(a.in));
  const LpiSolution sol = solve_lpi(assemble_estimator_lmi(pie, o), a);
  GainArtifact g;
  g.gamma = sol.gamma;
  g.options = o;
  g.P = sol.P;
  g.W = sol.W;
  try {
    g.p_inv = invert(separate(sol.P));
  } catch (const InversionError& e) {
    throw SolveFailure(std::string("P is not invertible: ") + e.what());
  }
  write_text_file(a.out, gain_to_json(g).dump(2) + "\n");
  std::printf("gamma %.10g\nwrote %s\n", sol.gamma, a.out.c_str());

  Manifest m("synthesize");
  m.params() = options_json(o);
  m.params()["tol"] = a.tol;
  m.input(a.in);
  m.output(a.out);
  m.write(manifest_path(a.manifest, a.out));
  return kOk;
}

struct SimulateArgs {
  std::string pie;
  std::string gain;
  std::string sim;
  std::string out = "trace.csv";
  std::string manifest;
  std::optional<double> dt;
  std::optional<double> t_final;
  std::optional<std::uint64_t> seed;
  std::optional<int> degree;
  int quad_order = 0;
};

int run_simulate(const SimulateArgs& a) {
  const PieSystem pie = pie_from_json(read_json_file(a.pie));
  const GainArtifact g = gain_from_json(read_json_file(a.gain));
  SimSpec spec = sim_from_json(read_json_file(a.sim));
  if (a.dt) spec.dt = *a.dt;
  if (a.t_final) spec.t_final = *a.t_final;
  if (a.seed) spec.noise.seed = *a.seed;
  if (a.degree) spec.degree = *a.degree;
  const SimConfig cfg = spec.config();
  cfg.validate();
  if (g.W.in_sig() != pie.q_sig() || g.W.out_sig() != pie.T.out_sig()) {
    throw FormatError("gain " + a.gain + " does not match the sensed outputs of " + a.pie);
  }

  AssemblyOptions ao;
  ao.quad_order = a.quad_order;
  const GalerkinMatrices gm = assemble_matrices(pie, g.gain(), spec.degree, ao);
  const SimTrace tr = simulate(gm, cfg);
  write_text_file(a.out, tr.to_csv());

  std::printf("basis size %d, %zu rows written to %s\n", gm.size(), tr.size(), a.out.c_str());
  std::printf("t = %.6g  |e| %.6e  |Te| %.6e", tr.t.back(), tr.e_norm.back(), tr.te_norm.back());
  if (tr.te_norm.front() > 0.0) std::printf("  |Te(t)|/|Te(0)| %.6e", tr.te_norm.back() / tr.te_norm.front());
  std::printf("\n");
  try {
    std::printf("energy ratio |z|/|w| %.6e  (certified gamma %.6e)\n", energy_ratio(tr), g.gamma);
  } catch (const SimulationError&) {
    std::printf("energy ratio undefined: zero disturbance\n");
  }

  Manifest m("simulate");
  m.params() = sim_to_json(spec);
  m.params()["quad_order"] = a.quad_order;
  m.input(a.pie);
  m.input(a.gain);
  m.input(a.sim);
  m.output(a.out);
  m.write(manifest_path(a.manifest, a.out));
  return kOk;
}

struct CheckArgs {
  std::string pie;
  std::uint64_t seed = 1;
};

int run_check(const CheckArgs& a) {
  std::vector<OracleResult> results = run_operator_oracles(a.seed);
  if (!a.pie.empty()) {
    OracleResult r = check_t_inverts_derivative(pie_from_json(read_json_file(a.pie)).T, a.seed);
    r.note = a.pie;
    results.push_back(r);
  }
  int failed = 0;
  for (const OracleResult& r : results) {
    print_result(r);
    failed += r.passed() ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all invariants hold" : std::to_string(failed) + " invariant(s) failed") << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimator synthesis and simulation for 2D PDEs through PI operators"};
  app.set_version_flag("--version", PIE_VERSION);
  app.require_subcommand(1);

  ExampleArgs ex;
  auto* c_ex = app.add_subcommand("example", "Write the heat estimation example as a PDE file");
  c_ex->add_option("-r,--reaction", ex.r, "Reaction coefficient r")->capture_default_str();
  c_ex->add_option("-o,--out", ex.pde_out, "PDE file")->capture_default_str();
  c_ex->add_option("--sim", ex.sim_out, "Also write the default simulation scenario here");

  ConvertArgs cv;
  auto* c_cv = app.add_subcommand("convert", "Convert a PDE file into a PIE file");
  c_cv->add_option("pde", cv.in, "PDE file")->required()->check(CLI::ExistingFile);
  c_cv->add_option("-o,--out", cv.out, "PIE file")->capture_default_str();
  c_cv->add_option("--seed", cv.seed, "Seed of the identity check")->capture_default_str();
  c_cv->add_option("--manifest", cv.manifest, "Manifest path (default: <out>.manifest.json)");

  auto add_solve_options = [](CLI::App* c, SolveArgs& s) {
    c->add_option("pie", s.in, "PIE file")->required()->check(CLI::ExistingFile);
    c->add_option("--deg", s.deg, "Monomial degrees d1 d2 d3")->expected(3)->capture_default_str();
    c->add_option("--eps", s.eps, "Coercivity margin of P")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--gamma", s.gamma, "Certify this bound instead of minimizing")->check(CLI::PositiveNumber);
    c->add_option("--tol", s.tol, "SDP tolerance")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--manifest", s.manifest, "Manifest path (default: <out>.manifest.json)");
    c->add_flag("-v,--verbose", s.verbose, "Print assembly and solver progress");
  };

  SolveArgs an;
  auto* c_an = app.add_subcommand("analyze", "Certify an L2-gain bound of the PIE from w to z");
  add_solve_options(c_an, an);
  c_an->add_option("-o,--out", an.out, "Optional certificate file");

  SolveArgs sy;
  sy.out = "gain.json";
  auto* c_sy = app.add_subcommand("synthesize", "Synthesize an H-infinity optimal estimator gain");
  add_solve_options(c_sy, sy);
  c_sy->add_option("-o,--out", sy.out, "Gain file")->capture_default_str();

  SimulateArgs sm;
  auto* c_sm = app.add_subcommand("simulate", "Simulate the estimation error by Galerkin projection");
  c_sm->add_option("pie", sm.pie, "PIE file")->required()->check(CLI::ExistingFile);
  c_sm->add_option("gain", sm.gain, "Gain file")->required()->check(CLI::ExistingFile);
  c_sm->add_option("sim", sm.sim, "Scenario file")->required()->check(CLI::ExistingFile);
  c_sm->add_option("-o,--out", sm.out, "Trace CSV")->capture_default_str();
  c_sm->add_option("--dt", sm.dt, "Euler step")->check(CLI::PositiveNumber);
  c_sm->add_option("--tfinal", sm.t_final, "Final time")->check(CLI::NonNegativeNumber);
  c_sm->add_option("--seed", sm.seed, "Noise seed");
  c_sm->add_option("--degree", sm.degree, "Legendre degree per coordinate")->check(CLI::NonNegativeNumber);
  c_sm->add_option("--quad-order", sm.quad_order, "Quadrature order for gain terms (0: automatic)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  c_sm->add_option("--manifest", sm.manifest, "Manifest path (default: <out>.manifest.json)");

  CheckArgs ck;
  auto* c_ck = app.add_subcommand("check", "Run the randomized operator invariant suites");
  c_ck->add_option("pie", ck.pie, "Also check T of this PIE file")->check(CLI::ExistingFile);
  c_ck->add_option("--seed", ck.seed, "Seed of the random draws")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidInput;
  }

  try {
    if (c_ex->parsed()) return run_example(ex);
    if (c_cv->parsed()) return run_convert(cv);
    if (c_an->parsed()) return run_analyze(an);
    if (c_sy->parsed()) return run_synthesize(sy);
    if (c_sm->parsed()) return run_simulate(sm);
    if (c_ck->parsed()) return run_check(ck);
  } catch (const BlowUpError& e) {
    std::cerr << "error: " << e.what() << " (t = " << e.time() << ")\n";
    return kBlowUp;
  } catch (const SolveFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolveFailed;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
