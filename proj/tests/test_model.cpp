#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <vector>

#include "nips/model.hpp"
#include "oracles.hpp"

using namespace nips;
using oracle::cd;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double s = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = s * rng.normal();
  return t;
}

ComplexTensor random_r(const ModelConfig& cfg, Rng& rng, bool tie_channels) {
  const int m1 = retained_rows(cfg.n1, cfg.eff_modes1());
  const int m2h = cfg.eff_modes2() + 1;
  ComplexTensor r = ComplexTensor::zeros({m1, m2h, cfg.d_k});
  for (int a = 0; a < m1; ++a)
    for (int b = 0; b < m2h; ++b) {
      double re = rng.normal(), im = rng.normal();
      for (int c = 0; c < cfg.d_k; ++c) {
        if (!tie_channels && c > 0) {
          re = rng.normal();
          im = rng.normal();
        }
        const std::size_t e = 2 * ((static_cast<std::size_t>(a) * m2h + b) * cfg.d_k + c);
        r.data()[e] = re;
        r.data()[e + 1] = im;
      }
    }
  return r;
}

// Direct-summation materialization of the spectral filter of one channel:
// select retained modes, multiply, conjugate-extend, inverse transform.
std::vector<double> oracle_filter_matrix(const ComplexTensor& r, int channel,
                                         const ModelConfig& cfg) {
  const int n1 = cfg.n1, n2 = cfg.n2, h2 = n2 / 2 + 1;
  const int kmax1 = cfg.eff_modes1(), kmax2 = cfg.eff_modes2();
  const int m1 = r.shape[0], m2h = r.shape[1], ch = r.shape[2];
  const int nn = n1 * n2;
  std::vector<double> w(static_cast<std::size_t>(nn) * nn, 0.0);
  std::vector<double> unit(static_cast<std::size_t>(nn), 0.0);
  for (int q = 0; q < nn; ++q) {
    unit[static_cast<std::size_t>(q)] = 1.0;
    auto full = oracle::dft2_full(unit.data(), n1, n2);
    std::vector<cd> half(static_cast<std::size_t>(n1) * h2, cd(0, 0));
    for (int s = 0; s < m1; ++s) {
      const int f = s <= kmax1 ? s : s - m1;
      const int k1 = f >= 0 ? f : f + n1;
      for (int k2 = 0; k2 <= kmax2 && k2 < h2; ++k2) {
        const std::size_t re =
            2 * ((static_cast<std::size_t>(s) * m2h + k2) * ch + channel);
        const cd rv(r.data()[re], r.data()[re + 1]);
        half[static_cast<std::size_t>(k1) * h2 + k2] =
            full[static_cast<std::size_t>(k1) * n2 + k2] * rv;
      }
    }
    auto out = oracle::idft2_full_re(oracle::extend_half(half, n1, n2), n1, n2);
    for (int p = 0; p < nn; ++p)
      w[static_cast<std::size_t>(p) * nn + q] = out[static_cast<std::size_t>(p)];
    unit[static_cast<std::size_t>(q)] = 0.0;
  }
  return w;
}

// Test-side layer normalization over all entries (first-layer placement).
std::vector<double> oracle_norm_all(const std::vector<double>& x, double eps = 1e-5) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = (x[i] - mean) / std::sqrt(var + eps);
  return out;
}

// Brute-force evaluation of the two-stream update by direct summation of the
// double integral: K[p, q](x, y) = h^2 sum_z Wp[x,z] (p Wqk q^T)(z, y).
struct OracleBlockOut {
  std::vector<double> g, v;
};
OracleBlockOut oracle_block(const std::vector<double>& wp,  // N x N
                            const Tensor& g, const Tensor& v,
                            const Tensor& wq, const Tensor& wk,
                            const ModelConfig& cfg) {
  const int n = cfg.tokens(), d = cfg.d, dk = cfg.d_k;
  const double h2 = cfg.quad_weight();
  // Wqk = scale * Wq Wk^T (d x d)
  std::vector<double> wqk(static_cast<std::size_t>(d) * d, 0.0);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double acc = 0.0;
      for (int k = 0; k < dk; ++k)
        acc += wq.data()[a * dk + k] * wk.data()[b * dk + k];
      wqk[static_cast<std::size_t>(a) * d + b] = acc * cfg.scale();
    }
  auto kernel = [&](const Tensor& p, const Tensor& q) {
    // K(x, y) = h^2 sum_z Wp[x,z] * sum_{a,b} p[z,a] wqk[a,b] q[y,b]
    std::vector<double> inner(static_cast<std::size_t>(n) * n, 0.0);  // (z, y)
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y) {
        double acc = 0.0;
        for (int a = 0; a < d; ++a) {
          double row = 0.0;
          for (int b = 0; b < d; ++b)
            row += wqk[static_cast<std::size_t>(a) * d + b] * q.data()[y * d + b];
          acc += p.data()[z * d + a] * row;
        }
        inner[static_cast<std::size_t>(z) * n + y] = acc;
      }
    std::vector<double> k(static_cast<std::size_t>(n) * n, 0.0);
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) {
        double acc = 0.0;
        for (int z = 0; z < n; ++z)
          acc += wp[static_cast<std::size_t>(x) * n + z] *
                 inner[static_cast<std::size_t>(z) * n + y];
        k[static_cast<std::size_t>(x) * n + y] = h2 * acc;
      }
    return k;
  };
  auto apply = [&](const std::vector<double>& k, const Tensor& rhs) {
    std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
    for (int x = 0; x < n; ++x)
      for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int y = 0; y < n; ++y)
          acc += k[static_cast<std::size_t>(x) * n + y] * rhs.data()[y * d + j];
        out[static_cast<std::size_t>(x) * d + j] = h2 * acc;
      }
    return out;
  };

  // g-row projects the g stream against both key streams; v-row projects the
  // v stream against both.
  auto kgg = kernel(g, g), kgv = kernel(g, v);
  auto kvv = kernel(v, v), kvg = kernel(v, g);
  auto t1 = apply(kgg, g), t2 = apply(kgv, v);
  auto t3 = apply(kvv, v), t4 = apply(kvg, g);
  std::vector<double> gu(t1.size()), vu(t1.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    gu[i] = t1[i] + t2[i];
    vu[i] = t3[i] + t4[i];
  }
  gu = oracle_norm_all(gu);
  vu = oracle_norm_all(vu);
  OracleBlockOut out;
  out.g.resize(t1.size());
  out.v.resize(t1.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    out.g[i] = g.data()[i] + gu[i];
    out.v[i] = v.data()[i] + vu[i];
  }
  return out;
}

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.d = 3;
  cfg.d_k = 2;
  cfg.n1 = cfg.n2 = 5;
  cfg.modes1 = cfg.modes2 = 2;  // full spectrum on a 5 x 5 grid
  return cfg;
}

}  // namespace

TEST_CASE("fourier_filter: annihilator, all-pass, dense DFT-matrix oracle") {
  ModelConfig cfg = small_cfg();
  Rng rng(41);
  Tensor y = random_tensor({cfg.tokens(), cfg.d_k}, rng);

  ComplexTensor zero = ComplexTensor::zeros(
      {retained_rows(cfg.n1, cfg.eff_modes1()), cfg.eff_modes2() + 1, cfg.d_k});
  Tensor out0 = fourier_filter(y, zero, cfg);
  for (std::size_t i = 0; i < out0.size(); ++i) CHECK(out0.data()[i] == 0.0);

  ComplexTensor ones = ComplexTensor::zeros(zero.shape);
  for (std::size_t i = 0; i < ones.size(); ++i) ones.data()[2 * i] = 1.0;
  Tensor ident = fourier_filter(y, ones, cfg);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::abs(ident.data()[i] - y.data()[i]) < 1e-12);

  ComplexTensor r = random_r(cfg, rng, /*tie_channels=*/false);
  Tensor filtered = fourier_filter(y, r, cfg);
  for (int c = 0; c < cfg.d_k; ++c) {
    auto w = oracle_filter_matrix(r, c, cfg);
    for (int p = 0; p < cfg.tokens(); ++p) {
      double acc = 0.0;
      for (int q = 0; q < cfg.tokens(); ++q)
        acc += w[static_cast<std::size_t>(p) * cfg.tokens() + q] *
               y.data()[q * cfg.d_k + c];
      CHECK(std::abs(filtered.data()[p * cfg.d_k + c] - acc) < 1e-10);
    }
  }
}

TEST_CASE("attention_block passes through under zero filter or zero keys") {
  ModelConfig cfg = small_cfg();
  Rng rng(43);
  Tensor g = random_tensor({cfg.tokens(), cfg.d}, rng);
  Tensor v = random_tensor({cfg.tokens(), cfg.d}, rng);

  LayerParams p;
  p.w_query = random_tensor({cfg.d, cfg.d_k}, rng);
  p.w_key = random_tensor({cfg.d, cfg.d_k}, rng);
  p.fourier_kernel = ComplexTensor::zeros(
      {retained_rows(cfg.n1, cfg.eff_modes1()), cfg.eff_modes2() + 1, cfg.d_k});
  auto [g1, v1] = attention_block(g, v, p, cfg, 1);
  CHECK(std::memcmp(g1.data(), g.data(), g.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(v1.data(), v.data(), v.size() * sizeof(double)) == 0);

  Rng rng2(44);
  p.fourier_kernel = random_r(cfg, rng2, false);
  p.w_key = Tensor::zeros({cfg.d, cfg.d_k});
  auto [g2, v2] = attention_block(g, v, p, cfg, 1);
  CHECK(std::memcmp(g2.data(), g.data(), g.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(v2.data(), v.data(), v.size() * sizeof(double)) == 0);
}

TEST_CASE("attention_block matches the brute-force double-integral oracle") {
  ModelConfig cfg = small_cfg();
  Rng rng(47);
  Tensor g = random_tensor({cfg.tokens(), cfg.d}, rng);
  Tensor v = random_tensor({cfg.tokens(), cfg.d}, rng);
  LayerParams p;
  p.w_query = random_tensor({cfg.d, cfg.d_k}, rng, 0.5);
  p.w_key = random_tensor({cfg.d, cfg.d_k}, rng, 0.5);
  p.fourier_kernel = random_r(cfg, rng, /*tie_channels=*/true);

  auto [g1, v1] = attention_block(g, v, p, cfg, 1);

  // independent dense materialization, divided by h^2 to act as Wp
  auto circ = oracle_filter_matrix(p.fourier_kernel, 0, cfg);
  const double inv_h2 = 1.0 / cfg.quad_weight();
  for (double& x : circ) x *= inv_h2;
  OracleBlockOut ref = oracle_block(circ, g, v, p.w_query, p.w_key, cfg);

  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::abs(g1.data()[i] - ref.g[i]) < 1e-10);
    CHECK(std::abs(v1.data()[i] - ref.v[i]) < 1e-10);
  }
}

TEST_CASE("quadratic baseline with circulant projection equals the nips block") {
  ModelConfig cfg = small_cfg();
  Rng rng(53);
  Tensor g = random_tensor({cfg.tokens(), cfg.d}, rng);
  Tensor v = random_tensor({cfg.tokens(), cfg.d}, rng);
  LayerParams nips_p;
  nips_p.w_query = random_tensor({cfg.d, cfg.d_k}, rng, 0.5);
  nips_p.w_key = random_tensor({cfg.d, cfg.d_k}, rng, 0.5);
  nips_p.fourier_kernel = random_r(cfg, rng, /*tie_channels=*/true);
  auto [g_ref, v_ref] = attention_block(g, v, nips_p, cfg, 1);

  LayerParams dense = nips_p;
  dense.proj_f = materialize_projection(nips_p.fourier_kernel, 0, cfg);
  dense.proj_u = dense.proj_f;
  for (Variant variant : {Variant::kNaoWpLinear, Variant::kNaoWpQuadratic}) {
    ModelConfig qcfg = cfg;
    qcfg.variant = variant;
    auto [g2, v2] = quadratic_baseline_block(g, v, dense, qcfg, 1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::abs(g2.data()[i] - g_ref.data()[i]) < 1e-10);
      CHECK(std::abs(v2.data()[i] - v_ref.data()[i]) < 1e-10);
    }
  }

  // zero projections pass straight through
  dense.proj_f = Tensor::zeros({cfg.tokens(), cfg.tokens()});
  dense.proj_u = Tensor::zeros({cfg.tokens(), cfg.tokens()});
  ModelConfig qcfg = cfg;
  qcfg.variant = Variant::kNaoWpQuadratic;
  auto [g3, v3] = quadratic_baseline_block(g, v, dense, qcfg, 1);
  CHECK(std::memcmp(g3.data(), g.data(), g.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(v3.data(), v.data(), v.size() * sizeof(double)) == 0);
}

TEST_CASE("kernel extraction: zero filter, bounded rank, factor consistency") {
  ModelConfig cfg = small_cfg();
  Rng rng(59);
  Tensor g = random_tensor({cfg.tokens(), cfg.d}, rng);
  Tensor v = random_tensor({cfg.tokens(), cfg.d}, rng);
  LayerParams last;
  last.w_query = random_tensor({cfg.d, cfg.d_k}, rng);
  last.w_key = random_tensor({cfg.d, cfg.d_k}, rng);
  last.fourier_kernel = ComplexTensor::zeros(
      {retained_rows(cfg.n1, cfg.eff_modes1()), cfg.eff_modes2() + 1, cfg.d_k});

  KernelFactors kf0 = extract_kernel_factors(g, v, last, cfg);
  KernelMatrix k0 = materialize_kernel(kf0, cfg);
  for (double x : k0.k) CHECK(x == 0.0);

  Rng rng2(60);
  last.fourier_kernel = random_r(cfg, rng2, false);
  KernelFactors kf = extract_kernel_factors(g, v, last, cfg);
  KernelMatrix k = materialize_kernel(kf, cfg);

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      km(k.k.data(), k.n_nodes, k.n_nodes);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(km);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * sv[0]) ++rank;
  CHECK(rank <= cfg.d_k);

  // factorized prediction equals the materialized kernel's quadrature sum
  Tensor f = random_tensor({cfg.tokens()}, rng2);
  Tensor pred = forward_predict(kf, f, cfg);
  for (int x = 0; x < k.n_nodes; ++x) {
    double acc = 0.0;
    for (int y = 0; y < k.n_nodes; ++y) acc += k.at(x, y) * f.data()[y];
    CHECK(std::abs(pred.data()[x] - k.quad_w * acc) < 1e-12);
  }

  Tensor zero_pred = forward_predict(kf, Tensor::zeros({cfg.tokens()}), cfg);
  for (std::size_t i = 0; i < zero_pred.size(); ++i)
    CHECK(zero_pred.data()[i] == 0.0);

  CHECK_THROWS_AS(forward_predict(kf, Tensor::zeros({7}), cfg), DimensionError);
}

TEST_CASE("parameter counting is exact and scales as documented") {
  ModelConfig cfg = small_cfg();
  Model model = Model::init(cfg, 7);
  CHECK(static_cast<long long>(param_count(model)) == count_params(cfg));

  ModelConfig doubled = cfg;
  doubled.d_k *= 2;
  const long long base_r = count_params(cfg) - 2LL * cfg.layers * cfg.d * cfg.d_k;
  const long long doubled_r =
      count_params(doubled) - 2LL * cfg.layers * cfg.d * doubled.d_k;
  CHECK(doubled_r == 2 * base_r);

  ModelConfig dense = cfg;
  dense.variant = Variant::kNaoWpQuadratic;
  CHECK(count_params(dense) > count_params(cfg));  // N > retained modes

  // diagnostic against the published 2-layer full-scale configuration
  ModelConfig paper;
  paper.layers = 2;
  paper.d = 50;
  paper.d_k = 40;
  paper.n1 = paper.n2 = 21;
  paper.modes1 = paper.modes2 = 12;
  MESSAGE("2-layer d=50 dk=40 21x21 parameter count: ", count_params(paper),
          " (published reference 98396; mode count there is unstated)");
}

TEST_CASE("column permutations change the kernel of an untrained model") {
  ModelConfig cfg = small_cfg();
  Model model = Model::init(cfg, 123);
  Rng rng(61);
  Tensor g = random_tensor({cfg.tokens(), cfg.d}, rng);
  Tensor v = random_tensor({cfg.tokens(), cfg.d}, rng);
  KernelMatrix k1 = materialize_kernel(model_forward(model, g, v), cfg);

  // rotate columns by one
  Tensor g2 = Tensor::zeros(g.shape), v2 = Tensor::zeros(v.shape);
  for (int x = 0; x < cfg.tokens(); ++x)
    for (int j = 0; j < cfg.d; ++j) {
      g2.data()[x * cfg.d + j] = g.data()[x * cfg.d + (j + 1) % cfg.d];
      v2.data()[x * cfg.d + j] = v.data()[x * cfg.d + (j + 1) % cfg.d];
    }
  KernelMatrix k2 = materialize_kernel(model_forward(model, g2, v2), cfg);
  double diff = 0.0;
  for (std::size_t i = 0; i < k1.k.size(); ++i)
    diff = std::max(diff, std::abs(k1.k[i] - k2.k[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("checkpoint container round trips bit for bit") {
  ModelConfig cfg = small_cfg();
  Checkpoint ck;
  ck.model = Model::init(cfg, 321);
  ck.epoch = 17;
  ck.adam_t = 1234;
  const std::size_t total = param_count(ck.model);
  ck.adam_m.assign(total, 0.25);
  ck.adam_v.assign(total, 0.5);
  ck.loss_digest = "deadbeefdeadbeef";

  const std::string p1 = "/tmp/nips_test_ck1.nipsck";
  const std::string p2 = "/tmp/nips_test_ck2.nipsck";
  save_checkpoint(p1, ck);
  Checkpoint loaded = load_checkpoint(p1);
  CHECK(loaded.epoch == 17);
  CHECK(loaded.adam_t == 1234);
  CHECK(loaded.loss_digest == ck.loss_digest);
  save_checkpoint(p2, loaded);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  {
    std::fstream f(p1, std::ios::in | std::ios::out | std::ios::binary);
    f.write("BADMAGIC", 8);
  }
  CHECK_THROWS_AS(load_checkpoint(p1), FormatError);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("regrid transfers retained modes across resolutions") {
  ModelConfig cfg = small_cfg();  // 5 x 5 grid, kmax 2
  Model model = Model::init(cfg, 5);
  Model fine = regrid(model, 9, 9);
  CHECK(fine.cfg.n1 == 9);
  // same parameter payload
  CHECK(param_count(fine) == param_count(model));

  ModelConfig wide = cfg;
  wide.modes1 = wide.modes2 = 4;  // caps above the 5-grid Nyquist
  Model m2 = Model::init(wide, 5);
  // moving to a finer grid raises the effective cap; R no longer fits
  CHECK_THROWS_AS(regrid(m2, 21, 21), DimensionError);
}
