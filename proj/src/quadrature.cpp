#include "pie/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace pie {

namespace {

// Golub-Welsch on [-1, 1]; cached per order.
const GaussRule& reference_rule(int n) {
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussRule r;
  for (int k = 0; k < n; ++k) {
    r.nodes.push_back(es.eigenvalues()(k));
    const double v = es.eigenvectors()(0, k);
    r.weights.push_back(2.0 * v * v);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

}  // namespace

GaussRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  const GaussRule& ref = reference_rule(n);
  GaussRule r;
  const double h = 0.5 * (b - a);
  const double m = 0.5 * (b + a);
  for (int k = 0; k < n; ++k) {
    r.nodes.push_back(m + h * ref.nodes[k]);
    r.weights.push_back(h * ref.weights[k]);
  }
  return r;
}

std::vector<double> chebyshev_nodes(int n) {
  std::vector<double> out;
  for (int k = 0; k < n; ++k) {
    out.push_back(0.5 - 0.5 * std::cos(M_PI * (2.0 * k + 1.0) / (2.0 * n)));
  }
  return out;
}

}  // namespace pie
