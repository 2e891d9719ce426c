#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "nips/tensor.hpp"

// Real 2-D transforms on top of cached one-axis DFT tables. Grids here are
// desk-scale (tens of points per axis), where the direct per-axis transform
// is fast, exact, and bit-deterministic.
//
// irfft2 semantics are pinned precisely so the adjoints below are exact for
// arbitrary (not necessarily Hermitian-consistent) half-spectrum input:
//   irfft2(X) = Re( IFFT2_full( extend(X) ) ),
// where extend() fills dropped columns k2 > n2/2 with the conjugate mirror
// conj(X[(n1-k1) % n1, n2-k2]) and stored columns are used as given.

namespace nips {

namespace {

struct Trig {
  std::vector<double> c, s;  // c[m] = cos(2 pi m / n), s[m] = sin(2 pi m / n)
};

const Trig& trig_for(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<Trig>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<Trig>();
    slot->c.resize(static_cast<std::size_t>(n));
    slot->s.resize(static_cast<std::size_t>(n));
    const double w = 2.0 * M_PI / static_cast<double>(n);
    for (int m = 0; m < n; ++m) {
      slot->c[static_cast<std::size_t>(m)] = std::cos(w * m);
      slot->s[static_cast<std::size_t>(m)] = std::sin(w * m);
    }
  }
  return *slot;
}

// Forward half-spectrum transform of one real n1 x n2 channel.
// out[(k1*h2 + k2)] is a complex pair; unnormalized.
void fwd2(const double* in, double* out_re, double* out_im, int n1, int n2) {
  const int h2 = n2 / 2 + 1;
  const Trig& t1 = trig_for(n1);
  const Trig& t2 = trig_for(n2);
  std::vector<double> sr(static_cast<std::size_t>(n1) * h2);
  std::vector<double> si(static_cast<std::size_t>(n1) * h2);
  // rows: real -> half complex
  for (int r = 0; r < n1; ++r) {
    const double* row = in + static_cast<std::size_t>(r) * n2;
    for (int k2 = 0; k2 < h2; ++k2) {
      double re = 0.0, im = 0.0;
      int idx = 0;
      for (int j = 0; j < n2; ++j) {
        re += row[j] * t2.c[static_cast<std::size_t>(idx)];
        im -= row[j] * t2.s[static_cast<std::size_t>(idx)];
        idx += k2;
        if (idx >= n2) idx -= n2;
      }
      sr[static_cast<std::size_t>(r) * h2 + k2] = re;
      si[static_cast<std::size_t>(r) * h2 + k2] = im;
    }
  }
  // columns: complex -> complex
  for (int k2 = 0; k2 < h2; ++k2) {
    for (int k1 = 0; k1 < n1; ++k1) {
      double re = 0.0, im = 0.0;
      int idx = 0;
      for (int r = 0; r < n1; ++r) {
        const double a = sr[static_cast<std::size_t>(r) * h2 + k2];
        const double b = si[static_cast<std::size_t>(r) * h2 + k2];
        const double c = t1.c[static_cast<std::size_t>(idx)];
        const double s = t1.s[static_cast<std::size_t>(idx)];
        re += a * c + b * s;
        im += b * c - a * s;
        idx += k1;
        if (idx >= n1) idx -= n1;
      }
      out_re[static_cast<std::size_t>(k1) * h2 + k2] = re;
      out_im[static_cast<std::size_t>(k1) * h2 + k2] = im;
    }
  }
}

// Inverse of one half-spectrum channel onto a real n1 x n2 grid with an
// overall `norm` factor. With doubled=true, interior columns (0 < k2 < n2/2)
// carry weight 2 (the conjugate-mirror reconstruction); with doubled=false
// every stored column carries weight 1 (the adjoint of fwd2).
void inv2(const double* in_re, const double* in_im, double* out, int n1,
          int n2, double norm, bool doubled) {
  const int h2 = n2 / 2 + 1;
  const Trig& t1 = trig_for(n1);
  const Trig& t2 = trig_for(n2);
  std::vector<double> ar(static_cast<std::size_t>(n1) * h2);
  std::vector<double> ai(static_cast<std::size_t>(n1) * h2);
  // columns: inverse transform along axis 1 (no normalization here)
  for (int k2 = 0; k2 < h2; ++k2) {
    for (int r = 0; r < n1; ++r) {
      double re = 0.0, im = 0.0;
      int idx = 0;
      for (int k1 = 0; k1 < n1; ++k1) {
        const double a = in_re[static_cast<std::size_t>(k1) * h2 + k2];
        const double b = in_im[static_cast<std::size_t>(k1) * h2 + k2];
        const double c = t1.c[static_cast<std::size_t>(idx)];
        const double s = t1.s[static_cast<std::size_t>(idx)];
        re += a * c - b * s;
        im += b * c + a * s;
        idx += r;
        if (idx >= n1) idx -= n1;
      }
      ar[static_cast<std::size_t>(r) * h2 + k2] = re;
      ai[static_cast<std::size_t>(r) * h2 + k2] = im;
    }
  }
  // rows: real part of the full-spectrum inverse
  for (int r = 0; r < n1; ++r) {
    double* row = out + static_cast<std::size_t>(r) * n2;
    for (int j = 0; j < n2; ++j) row[j] = 0.0;
    for (int k2 = 0; k2 < h2; ++k2) {
      const bool self = (k2 == 0) || (2 * k2 == n2);
      const double w = (doubled && !self) ? 2.0 : 1.0;
      const double re = ar[static_cast<std::size_t>(r) * h2 + k2] * w;
      const double im = ai[static_cast<std::size_t>(r) * h2 + k2] * w;
      int idx = 0;
      for (int j = 0; j < n2; ++j) {
        row[j] += re * t2.c[static_cast<std::size_t>(idx)] -
                  im * t2.s[static_cast<std::size_t>(idx)];
        idx += k2;
        if (idx >= n2) idx -= n2;
      }
    }
    for (int j = 0; j < n2; ++j) row[j] *= norm;
  }
}

void check_3d(const std::vector<int>& shape, const char* op) {
  if (shape.size() != 3)
    throw DimensionError(std::string(op) + " expects shape [n1, n2, channels]");
}

}  // namespace

int retained_rows(int n1, int kmax1) {
  return std::min(2 * kmax1 + 1, n1);
}

ComplexTensor rfft2(const Tensor& x) {
  check_3d(x.shape, "rfft2");
  const int n1 = x.shape[0], n2 = x.shape[1], ch = x.shape[2];
  if (n1 < 1 || n2 < 1) throw DimensionError("rfft2: empty grid");
  const int h2 = n2 / 2 + 1;
  ComplexTensor out = ComplexTensor::zeros({n1, h2, ch});

  std::vector<double> plane(static_cast<std::size_t>(n1) * n2);
  std::vector<double> re(static_cast<std::size_t>(n1) * h2);
  std::vector<double> im(static_cast<std::size_t>(n1) * h2);
  for (int c = 0; c < ch; ++c) {
    for (int e = 0; e < n1 * n2; ++e)
      plane[static_cast<std::size_t>(e)] =
          x.data()[static_cast<std::size_t>(e) * ch + c];
    fwd2(plane.data(), re.data(), im.data(), n1, n2);
    for (int e = 0; e < n1 * h2; ++e) {
      out.data()[2 * (static_cast<std::size_t>(e) * ch + c)] =
          re[static_cast<std::size_t>(e)];
      out.data()[2 * (static_cast<std::size_t>(e) * ch + c) + 1] =
          im[static_cast<std::size_t>(e)];
    }
  }

  if (Tape* tp = x.node >= 0 ? x.tape : nullptr) {
    int xn = x.node;
    out.tape = tp;
    out.node = tp->record(
        "rfft2", 2 * out.size(), {xn},
        [xn, n1, n2, h2, ch](Tape& t, const double* g) {
          // adjoint: weight-1 inverse, scaled by 1 (fwd2 was unnormalized)
          double* gx = t.grad_acc(xn);
          std::vector<double> gre(static_cast<std::size_t>(n1) * h2);
          std::vector<double> gim(static_cast<std::size_t>(n1) * h2);
          std::vector<double> plane(static_cast<std::size_t>(n1) * n2);
          for (int c = 0; c < ch; ++c) {
            for (int e = 0; e < n1 * h2; ++e) {
              gre[static_cast<std::size_t>(e)] =
                  g[2 * (static_cast<std::size_t>(e) * ch + c)];
              gim[static_cast<std::size_t>(e)] =
                  g[2 * (static_cast<std::size_t>(e) * ch + c) + 1];
            }
            inv2(gre.data(), gim.data(), plane.data(), n1, n2, 1.0, false);
            for (int e = 0; e < n1 * n2; ++e)
              gx[static_cast<std::size_t>(e) * ch + c] +=
                  plane[static_cast<std::size_t>(e)];
          }
        });
  }
  return out;
}

Tensor irfft2(const ComplexTensor& X, int n2) {
  check_3d(X.shape, "irfft2");
  const int n1 = X.shape[0], h2 = X.shape[1], ch = X.shape[2];
  if (n2 / 2 + 1 != h2)
    throw DimensionError("irfft2: target n2 inconsistent with half spectrum");
  Tensor out = Tensor::zeros({n1, n2, ch});
  const double norm = 1.0 / (static_cast<double>(n1) * n2);

  std::vector<double> re(static_cast<std::size_t>(n1) * h2);
  std::vector<double> im(static_cast<std::size_t>(n1) * h2);
  std::vector<double> plane(static_cast<std::size_t>(n1) * n2);
  for (int c = 0; c < ch; ++c) {
    for (int e = 0; e < n1 * h2; ++e) {
      re[static_cast<std::size_t>(e)] =
          X.data()[2 * (static_cast<std::size_t>(e) * ch + c)];
      im[static_cast<std::size_t>(e)] =
          X.data()[2 * (static_cast<std::size_t>(e) * ch + c) + 1];
    }
    inv2(re.data(), im.data(), plane.data(), n1, n2, norm, true);
    for (int e = 0; e < n1 * n2; ++e)
      out.data()[static_cast<std::size_t>(e) * ch + c] =
          plane[static_cast<std::size_t>(e)];
  }

  if (Tape* tp = X.node >= 0 ? X.tape : nullptr) {
    int xn = X.node;
    out.tape = tp;
    out.node = tp->record(
        "irfft2", out.size(), {xn},
        [xn, n1, n2, h2, ch, norm](Tape& t, const double* g) {
          // adjoint: forward transform, interior columns doubled, times norm
          double* gX = t.grad_acc(xn);
          std::vector<double> plane(static_cast<std::size_t>(n1) * n2);
          std::vector<double> re(static_cast<std::size_t>(n1) * h2);
          std::vector<double> im(static_cast<std::size_t>(n1) * h2);
          for (int c = 0; c < ch; ++c) {
            for (int e = 0; e < n1 * n2; ++e)
              plane[static_cast<std::size_t>(e)] =
                  g[static_cast<std::size_t>(e) * ch + c];
            fwd2(plane.data(), re.data(), im.data(), n1, n2);
            for (int k1 = 0; k1 < n1; ++k1)
              for (int k2 = 0; k2 < h2; ++k2) {
                const bool self = (k2 == 0) || (2 * k2 == n2);
                const double w = (self ? 1.0 : 2.0) * norm;
                const std::size_t e =
                    static_cast<std::size_t>(k1) * h2 + static_cast<std::size_t>(k2);
                gX[2 * (e * ch + c)] += w * re[e];
                gX[2 * (e * ch + c) + 1] += w * im[e];
              }
          }
        });
  }
  return out;
}

ComplexTensor spectral_mul(const ComplexTensor& X, const ComplexTensor& r,
                           int kmax1, int kmax2) {
  check_3d(X.shape, "spectral_mul");
  check_3d(r.shape, "spectral_mul");
  const int n1 = X.shape[0], h2 = X.shape[1], ch = X.shape[2];
  const int m1 = retained_rows(n1, kmax1);
  const int m2h = kmax2 + 1;
  if (kmax1 < 0 || kmax2 < 0 || 2 * kmax1 > n1 || m2h > h2)
    throw ConfigError("spectral_mul: retained modes exceed Nyquist");
  if (r.shape[0] != m1 || r.shape[1] != m2h || r.shape[2] != ch)
    throw DimensionError("spectral_mul: multiplier shape mismatch");

  // Row s of r maps to FFT row: s <= kmax1 -> s, else s - m1 (mod n1).
  std::vector<int> row_of(static_cast<std::size_t>(m1));
  for (int s = 0; s < m1; ++s) {
    int f = s <= kmax1 ? s : s - m1;
    row_of[static_cast<std::size_t>(s)] = f >= 0 ? f : f + n1;
  }

  ComplexTensor out = ComplexTensor::zeros(X.shape);
  const double* xd = X.data();
  const double* rd = r.data();
  double* od = out.data();
  for (int s = 0; s < m1; ++s) {
    const int k1 = row_of[static_cast<std::size_t>(s)];
    for (int k2 = 0; k2 < m2h; ++k2)
      for (int c = 0; c < ch; ++c) {
        const std::size_t xe =
            2 * ((static_cast<std::size_t>(k1) * h2 + k2) * ch + c);
        const std::size_t re =
            2 * ((static_cast<std::size_t>(s) * m2h + k2) * ch + c);
        const double xr = xd[xe], xi = xd[xe + 1];
        const double rr = rd[re], ri = rd[re + 1];
        od[xe] = xr * rr - xi * ri;
        od[xe + 1] = xr * ri + xi * rr;
      }
  }

  Tape* ta = X.node >= 0 ? X.tape : nullptr;
  Tape* tb = r.node >= 0 ? r.tape : nullptr;
  if (ta && tb && ta != tb)
    throw ContractError("operands recorded on different tapes");
  Tape* tp = ta ? ta : tb;
  if (tp) {
    int xn = X.node, rn = r.node;
    auto xs = X.store, rs = r.store;
    auto rows = std::make_shared<std::vector<int>>(std::move(row_of));
    out.tape = tp;
    out.node = tp->record(
        "spectral_mul", 2 * out.size(), {xn, rn},
        [xn, rn, xs, rs, rows, h2, ch, m1, m2h](Tape& t, const double* g) {
          double* gx = xn >= 0 ? t.grad_acc(xn) : nullptr;
          double* gr = rn >= 0 ? t.grad_acc(rn) : nullptr;
          const double* xd = xs->data();
          const double* rd = rs->data();
          for (int s = 0; s < m1; ++s) {
            const int k1 = (*rows)[static_cast<std::size_t>(s)];
            for (int k2 = 0; k2 < m2h; ++k2)
              for (int c = 0; c < ch; ++c) {
                const std::size_t xe =
                    2 * ((static_cast<std::size_t>(k1) * h2 + k2) * ch + c);
                const std::size_t re =
                    2 * ((static_cast<std::size_t>(s) * m2h + k2) * ch + c);
                const double gr_ = g[xe], gi_ = g[xe + 1];
                if (gx) {
                  // dX += dT * conj(R)
                  gx[xe] += gr_ * rd[re] + gi_ * rd[re + 1];
                  gx[xe + 1] += gi_ * rd[re] - gr_ * rd[re + 1];
                }
                if (gr) {
                  // dR += dT * conj(X)
                  gr[re] += gr_ * xd[xe] + gi_ * xd[xe + 1];
                  gr[re + 1] += gi_ * xd[xe] - gr_ * xd[xe + 1];
                }
              }
          }
        });
  }
  return out;
}

}  // namespace nips
