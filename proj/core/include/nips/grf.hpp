#pragma once

#include <cstdint>

#include "nips/rng.hpp"
#include "nips/tensor.hpp"

namespace nips {

/// Spectral description of a mean-zero Gaussian random field with covariance
/// operator (-laplacian + tau^2)^(-alpha) on a periodic box of edge
/// `period_length`, restricted to the unit-square grid n1 x n2. Fields are
/// scaled so the expected pointwise variance is 1.
struct GrfSpec {
  double tau = 5.0;
  double alpha = 4.0;
  int n1 = 21;
  int n2 = 21;
  double period_length = 2.0;
  std::uint64_t seed = 0;
  /// With tau = 0 the DC mode's spectral density is singular; callers must
  /// exclude it explicitly.
  bool include_dc = true;

  void validate() const;
  /// Periodic sampling grid extents. The box is sampled at the restriction
  /// grid's spacing, so the [0,1]^2 nodes are the leading n1 x n2 block.
  int m1() const;
  int m2() const;
};

/// Applies the covariance filter and unit-variance scaling to a given white
/// noise field on the periodic grid (m1 x m2). Linear in the noise.
Tensor grf_filter(const Tensor& white, const GrfSpec& spec);

/// Draws one periodic-box sample, m1 x m2.
Tensor sample_grf_periodic(const GrfSpec& spec, Rng& rng);

/// Draws one sample restricted to the unit-square grid, n1 x n2.
Tensor sample_grf(const GrfSpec& spec, Rng& rng);

/// Convenience overload seeding a fresh generator from spec.seed.
Tensor sample_grf(const GrfSpec& spec);

/// Two-phase microstructure rule: 12 where xi < 0, 3 where xi >= 0.
Tensor binarize_microstructure(const Tensor& xi);

}  // namespace nips
