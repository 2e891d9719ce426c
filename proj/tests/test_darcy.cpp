#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "nips/darcy.hpp"
#include "nips/grf.hpp"

using namespace nips;

namespace {

Tensor two_phase_field(int n, std::uint64_t seed) {
  GrfSpec spec;
  spec.n1 = spec.n2 = n;
  Rng rng(seed);
  return binarize_microstructure(sample_grf(spec, rng));
}

Tensor sine_field(int n, double (*f)(double, double)) {
  Tensor t = Tensor::zeros({n, n});
  const double h = 1.0 / (n - 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      t.data()[static_cast<std::size_t>(i) * n + j] = f(i * h, j * h);
  return t;
}

}  // namespace

TEST_CASE("constant coefficient reproduces the five-point Laplacian stencil") {
  Grid2D grid{5};
  Tensor b = Tensor::full({5, 5}, 1.0);
  StiffnessMatrix k = assemble_stiffness(b, grid);
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  // center row of the 3x3 interior: full stencil
  const int row = 1 * 3 + 1;
  CHECK(k.at(row, row) == doctest::Approx(4.0 * inv_h2));
  CHECK(k.at(row, row - 1) == doctest::Approx(-inv_h2));
  CHECK(k.at(row, row + 1) == doctest::Approx(-inv_h2));
  CHECK(k.at(row, row - 3) == doctest::Approx(-inv_h2));
  CHECK(k.at(row, row + 3) == doctest::Approx(-inv_h2));
}

TEST_CASE("stiffness is exactly symmetric and positive definite") {
  Grid2D grid{11};
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    Tensor b = two_phase_field(11, seed);
    StiffnessMatrix k = assemble_stiffness(b, grid);
    double asym = 0.0;
    for (int i = 0; i < k.m; ++i)
      for (int j = 0; j < k.m; ++j)
        asym = std::max(asym, std::abs(k.at(i, j) - k.at(j, i)));
    CHECK(asym == 0.0);

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        a(k.a.data(), k.m, k.m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }

  Tensor bad = Tensor::full({11, 11}, 1.0);
  bad.data()[5 * 11 + 5] = 0.0;
  CHECK_THROWS_AS(assemble_stiffness(bad, grid), DomainError);
}

TEST_CASE("zero load gives the zero solution") {
  Tensor b = two_phase_field(9, 4);
  Tensor p = solve_darcy(b, Tensor::zeros({9, 9}));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.data()[i] == 0.0);
}

TEST_CASE("manufactured solution converges at second order") {
  auto exact = [](double x, double y) {
    return std::sin(M_PI * x) * std::sin(M_PI * y);
  };
  auto source = [](double x, double y) {
    return 2.0 * M_PI * M_PI * std::sin(M_PI * x) * std::sin(M_PI * y);
  };
  double errs[2];
  int idx = 0;
  for (int n : {11, 21}) {
    Tensor b = Tensor::full({n, n}, 1.0);
    Tensor g = sine_field(n, +[](double x, double y) {
      return 2.0 * M_PI * M_PI * std::sin(M_PI * x) * std::sin(M_PI * y);
    });
    Tensor p = solve_darcy(b, g);
    double e = 0.0;
    const double h = 1.0 / (n - 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        e = std::max(e, std::abs(p.data()[static_cast<std::size_t>(i) * n + j] -
                                 exact(i * h, j * h)));
    errs[idx++] = e;
  }
  (void)source;
  const double order = std::log(errs[0] / errs[1]) / std::log(2.0);
  CHECK(order > 1.8);
  CHECK(order < 2.2);
}

TEST_CASE("interior residual vanishes for a two-phase solve") {
  const int n = 11;
  Grid2D grid{n};
  Tensor b = two_phase_field(n, 7);
  Tensor g = Tensor::full({n, n}, 1.0);
  Tensor p = solve_darcy(b, g);
  StiffnessMatrix k = assemble_stiffness(b, grid);
  const int ni = n - 2;
  double resid = 0.0;
  for (int r = 0; r < k.m; ++r) {
    double acc = 0.0;
    for (int c = 0; c < k.m; ++c) {
      const int ci = c / ni + 1, cj = c % ni + 1;
      acc += k.at(r, c) * p.data()[static_cast<std::size_t>(ci) * n + cj];
    }
    resid = std::max(resid, std::abs(acc - 1.0));
  }
  CHECK(resid < 1e-10);

  // boundary entries are exactly zero
  for (int j = 0; j < n; ++j) {
    CHECK(p.data()[static_cast<std::size_t>(j)] == 0.0);
    CHECK(p.data()[static_cast<std::size_t>(n - 1) * n + j] == 0.0);
    CHECK(p.data()[static_cast<std::size_t>(j) * n] == 0.0);
    CHECK(p.data()[static_cast<std::size_t>(j) * n + n - 1] == 0.0);
  }
}

TEST_CASE("energy identity holds") {
  const int n = 9;
  Grid2D grid{n};
  Tensor b = two_phase_field(n, 12);
  Rng rng(8);
  Tensor g = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Tensor p = solve_darcy(b, g);
  StiffnessMatrix k = assemble_stiffness(b, grid);
  const int ni = n - 2;
  double ptkp = 0.0, gtp = 0.0;
  for (int r = 0; r < k.m; ++r) {
    const int ri = r / ni + 1, rj = r % ni + 1;
    const double pr = p.data()[static_cast<std::size_t>(ri) * n + rj];
    gtp += g.data()[static_cast<std::size_t>(ri) * n + rj] * pr;
    for (int c = 0; c < k.m; ++c) {
      const int ci = c / ni + 1, cj = c % ni + 1;
      ptkp += pr * k.at(r, c) * p.data()[static_cast<std::size_t>(ci) * n + cj];
    }
  }
  CHECK(ptkp > 0.0);
  CHECK(ptkp == doctest::Approx(gtp).epsilon(1e-10));
}

TEST_CASE("solution scales linearly in the load and inversely in b") {
  const int n = 9;
  Tensor b = two_phase_field(n, 21);
  Rng rng(22);
  Tensor g = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();

  Tensor p = solve_darcy(b, g);
  Tensor p2 = solve_darcy(b, scale(g, 2.0));
  CHECK(std::memcmp(p2.data(), scale(p, 2.0).data(),
                    p.size() * sizeof(double)) == 0);  // power-of-two exact

  Tensor pb = solve_darcy(scale(b, 2.0), g);
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK(pb.data()[i] == doctest::Approx(0.5 * p.data()[i]).epsilon(1e-13));
}

TEST_CASE("greens kernel reproduces the solver through quadrature") {
  const int n = 9;
  Grid2D grid{n};
  Tensor b = two_phase_field(n, 33);
  KernelMatrix k = greens_kernel(b, grid);
  Rng rng(34);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor g = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Tensor p = solve_darcy(b, g);
    for (int x = 0; x < k.n_nodes; ++x) {
      double acc = 0.0;
      for (int y = 0; y < k.n_nodes; ++y) acc += k.at(x, y) * g.data()[y];
      CHECK(std::abs(k.quad_w * acc - p.data()[x]) < 1e-10);
    }
  }
}

TEST_CASE("greens kernel of a homogeneous medium is symmetric, entries nonnegative") {
  Grid2D grid{5};
  Tensor b = Tensor::full({5, 5}, 1.0);
  KernelMatrix k = greens_kernel(b, grid);
  for (int i = 0; i < k.n_nodes; ++i)
    for (int j = 0; j < k.n_nodes; ++j) {
      CHECK(k.at(i, j) == doctest::Approx(k.at(j, i)).epsilon(1e-12));
      CHECK(k.at(i, j) >= -1e-12);  // inverse of an M-matrix
    }
}
