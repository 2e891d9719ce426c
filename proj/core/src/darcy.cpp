#include "nips/darcy.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

namespace nips {

namespace {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                   Eigen::Dynamic, Eigen::RowMajor>>;

void check_field(const Tensor& f, int n, const char* what) {
  if (f.shape != std::vector<int>{n, n})
    throw DimensionError(std::string(what) + ": expected an n x n field");
}

int grid_side(const Tensor& b) {
  if (b.shape.size() != 2 || b.shape[0] != b.shape[1])
    throw DimensionError("expected a square n x n field");
  return b.shape[0];
}

Eigen::LLT<Eigen::MatrixXd> factor(const StiffnessMatrix& k) {
  ConstMatMap a(k.a.data(), k.m, k.m);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    double dmin = a.diagonal().minCoeff(), dmax = a.diagonal().maxCoeff();
    throw SolverError("stiffness factorization failed (not positive definite); "
                      "diagonal range [" +
                      std::to_string(dmin) + ", " + std::to_string(dmax) + "]");
  }
  return llt;
}

}  // namespace

StiffnessMatrix assemble_stiffness(const Tensor& b, const Grid2D& grid) {
  grid.validate();
  const int n = grid.n;
  check_field(b, n, "assemble_stiffness");
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!(b.data()[i] > 0.0))
      throw DomainError("assemble_stiffness: permeability must be positive");

  const int ni = n - 2;
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  StiffnessMatrix k;
  k.m = ni * ni;
  k.a.assign(static_cast<std::size_t>(k.m) * k.m, 0.0);

  auto bv = [&](int i, int j) { return b.data()[static_cast<std::size_t>(i) * n + j]; };
  auto id = [&](int i, int j) { return (i - 1) * ni + (j - 1); };

  const int di[4] = {1, -1, 0, 0};
  const int dj[4] = {0, 0, 1, -1};
  for (int i = 1; i <= ni; ++i)
    for (int j = 1; j <= ni; ++j) {
      const int row = id(i, j);
      for (int e = 0; e < 4; ++e) {
        const int pi = i + di[e], pj = j + dj[e];
        const double ce = 0.5 * (bv(i, j) + bv(pi, pj)) * inv_h2;
        k.at(row, row) += ce;
        if (pi >= 1 && pi <= ni && pj >= 1 && pj <= ni)
          k.at(row, id(pi, pj)) -= ce;
      }
    }
  return k;
}

Tensor solve_darcy(const Tensor& b, const Tensor& g) {
  const int n = grid_side(b);
  Grid2D grid{n};
  check_field(g, n, "solve_darcy");
  StiffnessMatrix k = assemble_stiffness(b, grid);
  auto llt = factor(k);

  const int ni = n - 2;
  Eigen::VectorXd rhs(ni * ni);
  for (int i = 1; i <= ni; ++i)
    for (int j = 1; j <= ni; ++j)
      rhs[(i - 1) * ni + (j - 1)] = g.data()[static_cast<std::size_t>(i) * n + j];

  Eigen::VectorXd sol = llt.solve(rhs);
  Tensor p = Tensor::zeros({n, n});
  for (int i = 1; i <= ni; ++i)
    for (int j = 1; j <= ni; ++j)
      p.data()[static_cast<std::size_t>(i) * n + j] = sol[(i - 1) * ni + (j - 1)];
  return p;
}

KernelMatrix greens_kernel(const Tensor& b, const Grid2D& grid) {
  const int n = grid.n;
  check_field(b, n, "greens_kernel");
  StiffnessMatrix k = assemble_stiffness(b, grid);
  auto llt = factor(k);
  Eigen::MatrixXd inv =
      llt.solve(Eigen::MatrixXd::Identity(k.m, k.m));

  const int ni = n - 2;
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  KernelMatrix out;
  out.n_nodes = n * n;
  out.grid_n = n;
  out.quad_w = grid.h() * grid.h();
  out.k.assign(static_cast<std::size_t>(out.n_nodes) * out.n_nodes, 0.0);
  for (int i = 1; i <= ni; ++i)
    for (int j = 1; j <= ni; ++j) {
      const int row_node = i * n + j;
      const int row_int = (i - 1) * ni + (j - 1);
      for (int p = 1; p <= ni; ++p)
        for (int q = 1; q <= ni; ++q)
          out.at(row_node, p * n + q) = inv(row_int, (p - 1) * ni + (q - 1)) * inv_h2;
    }
  return out;
}

}  // namespace nips
