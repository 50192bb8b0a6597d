#pragma once

#include <vector>

namespace pie {

/// Gauss-Legendre rule on [a, b]; exact for polynomials of degree <= 2n-1.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussRule gauss_legendre(int n, double a = 0.0, double b = 1.0);

/// Chebyshev points of the first kind mapped to [0,1].
std::vector<double> chebyshev_nodes(int n);

}  // namespace pie
