#include "nips/grf.hpp"

#include <cmath>

namespace nips {

namespace {

// Signed frequency of FFT index k on an axis of m points.
int signed_freq(int k, int m) { return 2 * k <= m ? k : k - m; }

}  // namespace

void GrfSpec::validate() const {
  if (alpha <= 0.0) throw ContractError("GrfSpec: alpha must be positive");
  if (tau < 0.0) throw ContractError("GrfSpec: tau must be nonnegative");
  if (tau == 0.0 && include_dc)
    throw DomainError("GrfSpec: singular spectrum (tau = 0 with DC mode included)");
  if (n1 < 2 || n2 < 2) throw ContractError("GrfSpec: grid must be at least 2x2");
  if (period_length < 1.0)
    throw ContractError("GrfSpec: periodic box must contain the unit square");
}

int GrfSpec::m1() const {
  return static_cast<int>(std::lround(period_length * (n1 - 1)));
}

int GrfSpec::m2() const {
  return static_cast<int>(std::lround(period_length * (n2 - 1)));
}

Tensor grf_filter(const Tensor& white, const GrfSpec& spec) {
  spec.validate();
  const int p1 = spec.m1(), p2 = spec.m2();
  if (white.shape != std::vector<int>{p1, p2})
    throw DimensionError("grf_filter: white noise must match the periodic grid");

  // Amplitude multiplier per mode: (|w|^2 + tau^2)^(-alpha/2), with angular
  // wavenumbers w_i = 2 pi f_i / period_length. The field is scaled so its
  // expected pointwise variance is exactly 1, which keeps the map linear in
  // the noise (a per-draw standardization would not be).
  const double wunit = 2.0 * M_PI / spec.period_length;
  const int h2 = p2 / 2 + 1;
  std::vector<double> amp(static_cast<std::size_t>(p1) * h2);
  double full_sum = 0.0;  // sum of gamma over the full spectrum
  for (int k1 = 0; k1 < p1; ++k1) {
    const double w1 = wunit * signed_freq(k1, p1);
    for (int k2 = 0; k2 < h2; ++k2) {
      const double w2 = wunit * k2;
      double gamma;
      if (k1 == 0 && k2 == 0 && !spec.include_dc) {
        gamma = 0.0;
      } else {
        gamma = std::pow(w1 * w1 + w2 * w2 + spec.tau * spec.tau, -spec.alpha);
      }
      amp[static_cast<std::size_t>(k1) * h2 + k2] = std::sqrt(gamma);
      const bool self = (k2 == 0) || (2 * k2 == p2);
      full_sum += (self ? 1.0 : 2.0) * gamma;
    }
  }
  // E[phi(x)^2] = (1/M) * sum_k gamma_k for an unnormalized forward DFT of
  // unit white noise; divide the amplitude by its square root.
  const double mtot = static_cast<double>(p1) * p2;
  const double c = full_sum > 0.0 ? 1.0 / std::sqrt(full_sum / mtot) : 0.0;

  ComplexTensor spec_w = rfft2(white.reshaped({p1, p2, 1}));
  for (int k1 = 0; k1 < p1; ++k1)
    for (int k2 = 0; k2 < h2; ++k2) {
      const double a = amp[static_cast<std::size_t>(k1) * h2 + k2] * c;
      const std::size_t e = 2 * (static_cast<std::size_t>(k1) * h2 + k2);
      spec_w.data()[e] *= a;
      spec_w.data()[e + 1] *= a;
    }
  return irfft2(spec_w, p2).reshaped({p1, p2});
}

Tensor sample_grf_periodic(const GrfSpec& spec, Rng& rng) {
  spec.validate();
  const int p1 = spec.m1(), p2 = spec.m2();
  Tensor white = Tensor::zeros({p1, p2});
  for (std::size_t i = 0; i < white.size(); ++i) white.data()[i] = rng.normal();
  return grf_filter(white, spec);
}

Tensor sample_grf(const GrfSpec& spec, Rng& rng) {
  Tensor periodic = sample_grf_periodic(spec, rng);
  const int p2 = spec.m2();
  Tensor out = Tensor::zeros({spec.n1, spec.n2});
  for (int i = 0; i < spec.n1; ++i)
    for (int j = 0; j < spec.n2; ++j)
      out.data()[static_cast<std::size_t>(i) * spec.n2 + j] =
          periodic.data()[static_cast<std::size_t>(i) * p2 + j];
  return out;
}

Tensor sample_grf(const GrfSpec& spec) {
  Rng rng(spec.seed);
  return sample_grf(spec, rng);
}

Tensor binarize_microstructure(const Tensor& xi) {
  Tensor out = Tensor::zeros(xi.shape);
  for (std::size_t i = 0; i < xi.size(); ++i)
    out.data()[i] = xi.data()[i] < 0.0 ? 12.0 : 3.0;
  return out;
}

}  // namespace nips
