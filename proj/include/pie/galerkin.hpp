#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pie/inversion.hpp"
#include "pie/pde_model.hpp"

namespace pie {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when the state norm leaves the admissible range.
class BlowUpError : public SimulationError {
 public:
  BlowUpError(const std::string& what, double time) : SimulationError(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Error dynamics T e_t = (A + L Cq) e - (B + L Dq) w - L eta projected on
/// the orthonormal Legendre basis; z_err = C e - D w.
struct GalerkinMatrices {
  int degree = 0;
  int n_u = 1;
  Eigen::MatrixXd T;      // <phi_i, T phi_j>
  Eigen::MatrixXd A;      // <phi_i, (A + L Cq) phi_j>
  Eigen::MatrixXd B_w;    // -<phi_i, (B + L Dq) e_k>
  Eigen::MatrixXd B_eta;  // -<phi_i, L 1_k>, one column per sensed component
  Eigen::MatrixXd C_z;
  Eigen::MatrixXd D_z;
  /// <T phi_i, T phi_j>, for the norm of the PDE state error.
  Eigen::MatrixXd T_gram;

  int size() const { return static_cast<int>(T.rows()); }
};

struct AssemblyOptions {
  /// Tensor Gauss-Legendre order for gain terms; 0 selects 2 degree + 2.
  int quad_order = 0;
  double quad_tol = 1e-9;
  int max_quad_order = 256;
};

/// Basis function j of the n_u-vector space: component j % n_u times the
/// tensor Legendre polynomial j / n_u.
std::vector<PolyKernel> galerkin_basis(int degree, int n_u);

GalerkinMatrices assemble_matrices(const PieSystem& pie, int degree);
GalerkinMatrices assemble_matrices(const PieSystem& pie, const GainOp& gain, int degree,
                                   const AssemblyOptions& opt = {});

using Disturbance = std::function<Eigen::VectorXd(double t)>;

struct NoiseSpec {
  double mean = 0.0;
  double variance = 0.0;
  std::uint64_t seed = 5489;
};

struct SimConfig {
  double dt = 2e-4;
  double t_final = 5.0;
  /// Keep every k-th step in the trace; the last step is always kept.
  int output_every = 1;
  Disturbance w;
  NoiseSpec noise;
  /// Fundamental-state error v_hat(0) - v(0), projected on the basis.
  VectorField initial_error;
  int projection_order = 24;
  double blow_up_norm = 1e12;

  void validate() const;
};

struct SimTrace {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> c;
  std::vector<Eigen::VectorXd> w;
  std::vector<Eigen::VectorXd> z;
  std::vector<double> e_norm;
  std::vector<double> te_norm;

  std::size_t size() const { return t.size(); }
  /// Columns t, w, |e|, |Te|, z with 17 significant digits.
  std::string to_csv() const;
};

/// c_j = <phi_j, v> by tensor Gauss-Legendre quadrature.
Eigen::VectorXd project(const VectorField& v, int degree, int n_u, int order);

/// Explicit Euler on T c' = A c + B_w w + B_eta eta. Noise is drawn per step
/// and channel from N(mean, variance) with std::mt19937_64 and the given seed.
SimTrace simulate(const GalerkinMatrices& m, const SimConfig& cfg);

/// |z_err|_{L2[0,T]} / |w|_{L2[0,T]} by the trapezoidal rule.
double energy_ratio(const SimTrace& trace);

/// w(t) = a exp(-t / 2) sin(pi t) with a = 5 by default.
Disturbance damped_sine(double amplitude = 5.0, double decay = 0.5, double freq = 3.14159265358979323846);

/// Fundamental state d_x^2 d_y^2 u of u = a ((x-1)^4 - 1) sin(pi y / 2); the
/// estimate starts at zero, so the error is the negative of it.
VectorField heat_initial_error(double amplitude = 5.0);

}  // namespace pie
