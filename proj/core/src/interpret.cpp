#include "nips/interpret.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "nips/trainer.hpp"

namespace nips {

namespace {

void check_square_kernel(const KernelMatrix& k) {
  if (k.grid_n * k.grid_n != k.n_nodes ||
      k.k.size() != static_cast<std::size_t>(k.n_nodes) * k.n_nodes)
    throw DimensionError("kernel is not square on a grid");
}

std::vector<double> interior_values(const Tensor& s) {
  const int n = s.shape[0];
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>((n - 2) * (n - 2)));
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j)
      vals.push_back(s.data()[static_cast<std::size_t>(i) * n + j]);
  return vals;
}

double otsu_threshold(std::vector<double> vals) {
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  if (vals.front() == vals.back())
    throw ContractError("threshold_twophase: degenerate (constant) field");
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + vals[i];
  const double total = prefix[n];
  double best = -1.0, best_t = 0.5 * (vals.front() + vals.back());
  for (std::size_t cut = 1; cut < n; ++cut) {
    if (vals[cut - 1] == vals[cut]) continue;
    const double w0 = static_cast<double>(cut) / static_cast<double>(n);
    const double w1 = 1.0 - w0;
    const double mu0 = prefix[cut] / static_cast<double>(cut);
    const double mu1 = (total - prefix[cut]) / static_cast<double>(n - cut);
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_t = 0.5 * (vals[cut - 1] + vals[cut]);
    }
  }
  return best_t;
}

// Grid edges touching at least one interior node; edges between two boundary
// nodes never appear in an interior equation.
struct EdgeList {
  // each edge: nodes u, v (full-grid ids) and interior ids (or -1)
  std::vector<std::array<int, 4>> edges;
};

EdgeList used_edges(const Grid2D& grid) {
  const int n = grid.n;
  const int ni = n - 2;
  auto interior_id = [&](int i, int j) {
    return (i >= 1 && i <= ni && j >= 1 && j <= ni) ? (i - 1) * ni + (j - 1) : -1;
  };
  EdgeList out;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      // right and down edges, deduplicated by orientation
      if (j + 1 < n) {
        const int iu = interior_id(i, j), iv = interior_id(i, j + 1);
        if (iu >= 0 || iv >= 0)
          out.edges.push_back({i * n + j, i * n + j + 1, iu, iv});
      }
      if (i + 1 < n) {
        const int iu = interior_id(i, j), iv = interior_id(i + 1, j);
        if (iu >= 0 || iv >= 0)
          out.edges.push_back({i * n + j, (i + 1) * n + j, iu, iv});
      }
    }
  return out;
}

}  // namespace

Tensor rowsum_map(const KernelMatrix& k) {
  check_square_kernel(k);
  const int n = k.grid_n;
  Tensor s = Tensor::zeros({n, n});
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      const int row = i * n + j;
      double acc = 0.0;
      for (int col = 0; col < k.n_nodes; ++col) acc += std::abs(k.at(row, col));
      s.data()[static_cast<std::size_t>(i) * n + j] = k.quad_w * acc;
    }
  return s;
}

ThresholdResult threshold_twophase(const Tensor& s) {
  if (s.shape.size() != 2 || s.shape[0] != s.shape[1] || s.shape[0] < 3)
    throw DimensionError("threshold_twophase: expected an n x n field, n >= 3");
  const int n = s.shape[0];
  ThresholdResult out;
  out.threshold = otsu_threshold(interior_values(s));
  out.phases = Tensor::zeros({n, n});
  for (std::size_t e = 0; e < s.size(); ++e)
    out.phases.data()[e] = s.data()[e] < out.threshold ? 12.0 : 3.0;
  return out;
}

double recovery_objective(const Tensor& b, const KernelMatrix& learned,
                          const Grid2D& grid, std::vector<double>* grad) {
  check_square_kernel(learned);
  const int n = grid.n;
  if (learned.grid_n != n)
    throw DimensionError("recovery_objective: kernel grid mismatch");
  if (b.shape != std::vector<int>{n, n})
    throw DimensionError("recovery_objective: b must be n x n");
  const int ni = n - 2;
  const int m = ni * ni;

  StiffnessMatrix k = assemble_stiffness(b, grid);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      ka(k.a.data(), m, m);
  Eigen::LLT<Eigen::MatrixXd> llt(ka);
  if (llt.info() != Eigen::Success)
    throw SolverError("recovery_objective: stiffness not positive definite");
  Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(m, m));

  // target: h^2 * K_learned restricted to interior nodes
  Eigen::MatrixXd target(m, m);
  for (int i = 1; i <= ni; ++i)
    for (int j = 1; j <= ni; ++j)
      for (int p = 1; p <= ni; ++p)
        for (int q = 1; q <= ni; ++q)
          target((i - 1) * ni + (j - 1), (p - 1) * ni + (q - 1)) =
              learned.quad_w * learned.at(i * n + j, p * n + q);

  Eigen::MatrixXd diff = kinv - target;
  const double obj = diff.squaredNorm();
  if (!grad) return obj;

  // dObj/dK = -2 K^{-1} (K^{-1} - T) K^{-1}; chain through the per-edge
  // arithmetic-mean coefficients into nodal values.
  Eigen::MatrixXd sens = -2.0 * (kinv * diff * kinv);
  grad->assign(static_cast<std::size_t>(n) * n, 0.0);
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  for (const auto& e : used_edges(grid).edges) {
    const int iu = e[2], iv = e[3];
    double dc = 0.0;  // dObj / d(edge coefficient), coefficient in K units
    if (iu >= 0) dc += sens(iu, iu);
    if (iv >= 0) dc += sens(iv, iv);
    if (iu >= 0 && iv >= 0) dc -= sens(iu, iv) + sens(iv, iu);
    dc *= inv_h2;
    // edge coefficient is the average of the two nodal values
    (*grad)[static_cast<std::size_t>(e[0])] += 0.5 * dc;
    (*grad)[static_cast<std::size_t>(e[1])] += 0.5 * dc;
  }
  return obj;
}

RecoveryResult recover_permeability(const KernelMatrix& learned,
                                    const Grid2D& grid,
                                    const RecoveryOptions& opts,
                                    const Tensor* true_b) {
  grid.validate();
  if (grid.n > 21)
    throw ContractError("recover_permeability: dense inverses limited to n <= 21");
  const int n = grid.n;
  const std::size_t nn = static_cast<std::size_t>(n) * n;

  RecoveryResult out;
  out.b_star = Tensor::full({n, n}, opts.init_value);
  std::vector<double> grad;
  std::vector<double> m(nn, 0.0), v(nn, 0.0);
  TrainConfig adam;  // betas/eps defaults; lr passed per step
  Tensor prev = out.b_star;

  for (int it = 0; it < opts.max_iters; ++it) {
    double obj;
    try {
      obj = recovery_objective(out.b_star, learned, grid, &grad);
    } catch (const SolverError&) {
      // reject the step: fall halfway back toward the feasible start
      for (std::size_t e = 0; e < nn; ++e)
        out.b_star.data()[e] =
            0.5 * (prev.data()[e] + opts.init_value);
      continue;
    }
    out.objective_trace.push_back(obj);
    prev = out.b_star;
    adam_step({out.b_star.data(), nn}, {grad.data(), nn}, {m.data(), nn},
              {v.data(), nn}, it + 1, adam, opts.lr);
    for (std::size_t e = 0; e < nn; ++e)
      out.b_star.data()[e] =
          std::clamp(out.b_star.data()[e], opts.clamp_lo, opts.clamp_hi);
    const int w = opts.stop_window;
    if (static_cast<int>(out.objective_trace.size()) > w) {
      const double before =
          out.objective_trace[out.objective_trace.size() - 1 - static_cast<std::size_t>(w)];
      if (before > 0 && (before - obj) / before < opts.stop_rel_drop) break;
    }
  }

  // Fix the checkerboard null component by minimizing discrete roughness:
  // c* = <D b, D chi> / ||D chi||^2 over grid edges, chi = (-1)^(i+j).
  {
    double num = 0.0, den = 0.0;
    auto chi = [&](int i, int j) { return ((i + j) % 2 == 0) ? 1.0 : -1.0; };
    auto bval = [&](int i, int j) {
      return out.b_star.data()[static_cast<std::size_t>(i) * n + j];
    };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j + 1 < n) {
          const double db = bval(i, j) - bval(i, j + 1);
          const double dc = chi(i, j) - chi(i, j + 1);
          num += db * dc;
          den += dc * dc;
        }
        if (i + 1 < n) {
          const double db = bval(i, j) - bval(i + 1, j);
          const double dc = chi(i, j) - chi(i + 1, j);
          num += db * dc;
          den += dc * dc;
        }
      }
    const double c = num / den;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out.b_star.data()[static_cast<std::size_t>(i) * n + j] -= c * chi(i, j);
  }

  ThresholdResult th = threshold_twophase(out.b_star);
  // For a recovered permeability the high class is the high-permeability
  // phase; undo the rowsum orientation of threshold_twophase.
  out.thresholded = Tensor::zeros({n, n});
  for (std::size_t e = 0; e < nn; ++e)
    out.thresholded.data()[e] =
        out.b_star.data()[e] < th.threshold ? 3.0 : 12.0;
  out.threshold = th.threshold;
  if (true_b) out.microstructure_error = interior_rel_l2(out.b_star, *true_b);
  return out;
}

double interior_phase_agreement(const Tensor& predicted, const Tensor& truth) {
  if (predicted.shape != truth.shape || predicted.shape.size() != 2)
    throw DimensionError("interior_phase_agreement: shape mismatch");
  const int n = predicted.shape[0];
  int agree = 0, total = 0;
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      const std::size_t e = static_cast<std::size_t>(i) * n + j;
      agree += predicted.data()[e] == truth.data()[e] ? 1 : 0;
      ++total;
    }
  return static_cast<double>(agree) / total;
}

double interior_rel_l2(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape || a.shape.size() != 2)
    throw DimensionError("interior_rel_l2: shape mismatch");
  const int n = a.shape[0];
  double num = 0.0, den = 0.0;
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      const std::size_t e = static_cast<std::size_t>(i) * n + j;
      const double d = a.data()[e] - b.data()[e];
      num += d * d;
      den += b.data()[e] * b.data()[e];
    }
  return std::sqrt(num / den);
}

}  // namespace nips
