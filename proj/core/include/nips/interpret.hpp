#pragma once

#include <vector>

#include "nips/darcy.hpp"
#include "nips/kernel_matrix.hpp"
#include "nips/tensor.hpp"

namespace nips {

/// Interaction-strength map s(x) = h^2 * sum_y |K(x, y)|, reshaped onto the
/// grid; boundary entries are zeroed (no boundary information under
/// homogeneous Dirichlet data).
Tensor rowsum_map(const KernelMatrix& k);

struct ThresholdResult {
  Tensor phases;  // n x n map with values in {3, 12}
  double threshold = 0;
};

/// Two-class variance-maximizing (Otsu) threshold over interior values; the
/// low class maps to 12 and the high class to 3, matching the inverse
/// relation between kernel strength and permeability.
ThresholdResult threshold_twophase(const Tensor& s);

struct RecoveryOptions {
  double lr = 0.05;
  int max_iters = 2000;
  double clamp_lo = 0.5, clamp_hi = 50.0;
  double init_value = 7.5;  // midpoint of the two phases
  double stop_rel_drop = 1e-6;
  int stop_window = 50;
};

struct RecoveryResult {
  Tensor b_star;  // n x n nodal permeability
  std::vector<double> objective_trace;
  double microstructure_error = -1;  // interior relative L2 vs true b
  Tensor thresholded;                // {3, 12} map of b_star
  double threshold = 0;
};

/// Objective || K_B^{-1} - h^2 * K_learned ||_F^2 over interior nodes and,
/// when requested, its analytic nodal gradient via
/// d(K^{-1}) = -K^{-1} dK K^{-1} assembled from stencil sensitivities.
double recovery_objective(const Tensor& b, const KernelMatrix& learned,
                          const Grid2D& grid, std::vector<double>* grad);

/// Adam descent on the nodal permeability from a flat start, clamped to
/// [clamp_lo, clamp_hi]. The stencil reads only nodal averages over grid
/// edges, so the +/-c checkerboard field (and the four corner values) are
/// invisible to the objective; the checkerboard coefficient is fixed after
/// descent by minimizing the recovered field's discrete roughness, and
/// corner nodes are excluded from the reported error.
RecoveryResult recover_permeability(const KernelMatrix& learned,
                                    const Grid2D& grid,
                                    const RecoveryOptions& opts,
                                    const Tensor* true_b = nullptr);

/// Fraction of interior nodes where the two phase maps agree.
double interior_phase_agreement(const Tensor& predicted, const Tensor& truth);

/// Relative L2 distance over interior nodes.
double interior_rel_l2(const Tensor& a, const Tensor& b);

}  // namespace nips
