#pragma once

#include <vector>

#include "nips/kernel_matrix.hpp"
#include "nips/tensor.hpp"

namespace nips {

/// Uniform unit-square grid, n points per side including the boundary.
struct Grid2D {
  int n = 21;

  double h() const { return 1.0 / (n - 1); }
  int interior() const { return (n - 2) * (n - 2); }
  int nodes() const { return n * n; }
  void validate() const {
    if (n < 3) throw ContractError("Grid2D: need n >= 3");
  }
};

/// Dense symmetric stiffness matrix over interior nodes (row-major).
struct StiffnessMatrix {
  int m = 0;
  std::vector<double> a;

  double at(int i, int j) const {
    return a[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(j)];
  }
  double& at(int i, int j) {
    return a[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(j)];
  }
};

/// Conservative 5-point discretization of -div(b grad .) with arithmetic-mean
/// edge coefficients b_{i+1/2,j} = (b[i,j] + b[i+1,j]) / 2, divided by h^2;
/// homogeneous Dirichlet rows are eliminated.
StiffnessMatrix assemble_stiffness(const Tensor& b, const Grid2D& grid);

/// Solves -div(b grad p) = g on the grid implied by b's shape; boundary
/// entries of p are exactly zero.
Tensor solve_darcy(const Tensor& b, const Tensor& g);

/// Discrete Green's kernel: the inverse stiffness scaled by 1/h^2 and
/// zero-padded over boundary rows/columns, so that the quadrature sum
/// h^2 * sum_y K(x, y) g(y) reproduces solve_darcy on interior nodes.
KernelMatrix greens_kernel(const Tensor& b, const Grid2D& grid);

}  // namespace nips
