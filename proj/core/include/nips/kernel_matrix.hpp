#pragma once

#include <cstddef>
#include <vector>

namespace nips {

/// Materialized kernel K(x, y) on grid nodes; applied with the quadrature
/// weight: u(x) = quad_w * sum_y K(x, y) f(y).
struct KernelMatrix {
  int n_nodes = 0;  // N = grid_n * grid_n
  int grid_n = 0;   // points per side, including the boundary
  double quad_w = 0.0;
  std::vector<double> k;  // N x N, row-major

  double at(int i, int j) const {
    return k[static_cast<std::size_t>(i) * n_nodes + static_cast<std::size_t>(j)];
  }
  double& at(int i, int j) {
    return k[static_cast<std::size_t>(i) * n_nodes + static_cast<std::size_t>(j)];
  }
};

}  // namespace nips
