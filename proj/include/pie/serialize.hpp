#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pie/galerkin.hpp"
#include "pie/inversion.hpp"
#include "pie/lpi.hpp"
#include "pie/pde_model.hpp"

namespace pie {

using Json = nlohmann::json;

/// Malformed or inconsistent artifact content.
class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parses text, reporting syntax errors with line and column.
Json parse_json(const std::string& text, const std::string& source = "input");
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

/// {"rows", "cols", "terms": [{"exp": [x, y, theta, eta, nu, mu], "row", "col", "coeff"}]}
Json kernel_to_json(const PolyKernel& k);
PolyKernel kernel_from_json(const Json& j);

/// {"out_sig": [n0, nx, ny, n2], "in_sig": [...], "blocks": [{"out", "in", "rx", "ry", "kernel"}]}
Json op_to_json(const BlockPiOp& op);
BlockPiOp op_from_json(const Json& j);

Json pde_to_json(const PdeSystem& p);
PdeSystem pde_from_json(const Json& j);

Json pie_to_json(const PieSystem& p);
PieSystem pie_from_json(const Json& j);

/// Kernels of an EvaluableOp sampled on its tensor Gauss-Legendre grid.
Json evaluable_to_json(const EvaluableOp& op);

struct GainArtifact {
  double gamma = 0.0;
  LpiOptions options;
  BlockPiOp P;
  BlockPiOp W;
  EvaluableOp p_inv;

  GainOp gain() const { return GainOp(p_inv, W); }
};

Json gain_to_json(const GainArtifact& g);
/// Rebuilds P^{-1} from P and checks it against the stored samples.
GainArtifact gain_from_json(const Json& j, double sample_tol = 1e-8);

/// Simulation scenario with named signal shapes, so that it can be stored.
struct SimSpec {
  int degree = 5;
  double dt = 2e-4;
  double t_final = 5.0;
  int output_every = 1;
  NoiseSpec noise;
  /// "damped_sine" or "zero".
  std::string disturbance = "damped_sine";
  double w_amplitude = 5.0;
  double w_decay = 0.5;
  double w_freq = 3.14159265358979323846;
  /// "heat_example" or "zero".
  std::string initial = "heat_example";
  double u_amplitude = 5.0;

  SimConfig config() const;
};

Json sim_to_json(const SimSpec& s);
SimSpec sim_from_json(const Json& j);

}  // namespace pie
