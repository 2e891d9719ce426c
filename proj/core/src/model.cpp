#include "nips/model.hpp"

#include <cmath>

namespace nips {

namespace {

constexpr std::uint64_t kStreamInit = 11;

std::vector<int> norm_axes(const ModelConfig& cfg, int layer_index) {
  // First layer: normalize jointly over tokens and channels; later layers
  // over the channel axis only (unless the all-layers ablation is on).
  if (layer_index <= 1 || cfg.norm_placement == NormPlacement::kAllLayersBoth)
    return {0, 1};
  return {1};
}

void check_stream(const Tensor& t, const ModelConfig& cfg, const char* what) {
  if (t.shape != std::vector<int>{cfg.tokens(), cfg.d})
    throw DimensionError(std::string(what) + ": expected [tokens x d] stream");
}

// Shared inner factor of both stream updates:
//   M = h^2 * (K_f^T G + K_u^T V), shape d_k x d.
Tensor inner_factor(const Tensor& g, const Tensor& v, const Tensor& k_f,
                    const Tensor& k_u, const ModelConfig& cfg) {
  return scale(add(matmul_tn(k_f, g), matmul_tn(k_u, v)), cfg.quad_weight());
}

std::pair<Tensor, Tensor> block_with_projection(
    const Tensor& g, const Tensor& v, const LayerParams& p,
    const ModelConfig& cfg, int layer_index,
    const std::function<Tensor(const Tensor&, bool)>& project) {
  check_stream(g, cfg, "attention_block");
  check_stream(v, cfg, "attention_block");
  Tensor q_f = project(matmul(g, p.w_query), /*f_stream=*/true);
  Tensor q_u = project(matmul(v, p.w_query), /*f_stream=*/false);
  Tensor k_f = matmul(g, p.w_key);
  Tensor k_u = matmul(v, p.w_key);
  Tensor m = inner_factor(g, v, k_f, k_u, cfg);
  const auto axes = norm_axes(cfg, layer_index);
  Tensor g_out = add(g, layer_norm(scale(matmul(q_f, m), cfg.scale()), axes));
  Tensor v_out = add(v, layer_norm(scale(matmul(q_u, m), cfg.scale()), axes));
  return {g_out, v_out};
}

std::pair<Tensor, Tensor> quadratic_order_block(const Tensor& g,
                                                const Tensor& v,
                                                const LayerParams& p,
                                                const ModelConfig& cfg,
                                                int layer_index) {
  // Materializes the token-pair kernel of each stream before applying it;
  // same map as the factored order, at O(N^2) cost and memory.
  check_stream(g, cfg, "quadratic_baseline_block");
  check_stream(v, cfg, "quadratic_baseline_block");
  const double h2 = cfg.quad_weight();
  Tensor q_f = scale(matmul(p.proj_f, matmul(g, p.w_query)), h2);
  Tensor q_u = scale(matmul(p.proj_u, matmul(v, p.w_query)), h2);
  Tensor k_f = matmul(g, p.w_key);
  Tensor k_u = matmul(v, p.w_key);
  const auto axes = norm_axes(cfg, layer_index);
  auto stream_update = [&](const Tensor& q) {
    Tensor kmat_f = matmul_nt(q, k_f);  // N x N
    Tensor kmat_u = matmul_nt(q, k_u);  // N x N
    Tensor upd = add(matmul(kmat_f, g), matmul(kmat_u, v));
    return layer_norm(scale(upd, cfg.scale() * h2), axes);
  };
  Tensor g_out = add(g, stream_update(q_f));
  Tensor v_out = add(v, stream_update(q_u));
  return {g_out, v_out};
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kNips: return "nips";
    case Variant::kNaoWpQuadratic: return "nao-wp-quadratic";
    case Variant::kNaoWpLinear: return "nao-wp-linear";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_string(const std::string& s) {
  if (s == "nips") return Variant::kNips;
  if (s == "nao-wp" || s == "nao-wp-quadratic") return Variant::kNaoWpQuadratic;
  if (s == "nao-wp-linear") return Variant::kNaoWpLinear;
  throw ConfigError("unknown variant: " + s);
}

std::string to_string(NormPlacement p) {
  return p == NormPlacement::kFirstLayerBoth ? "first-layer-both"
                                             : "all-layers-both";
}

NormPlacement norm_placement_from_string(const std::string& s) {
  if (s == "first-layer-both") return NormPlacement::kFirstLayerBoth;
  if (s == "all-layers-both") return NormPlacement::kAllLayersBoth;
  throw ConfigError("unknown norm placement: " + s);
}

double ModelConfig::scale() const { return 1.0 / std::sqrt(static_cast<double>(d_k)); }

void ModelConfig::validate() const {
  if (layers < 2) throw ConfigError("ModelConfig: need at least 2 layers");
  if (d < 1 || d_k < 1) throw ConfigError("ModelConfig: need d, d_k >= 1");
  if (n1 < 2 || n2 < 2) throw ConfigError("ModelConfig: grid too small");
  if (modes1 < 0 || modes2 < 0) throw ConfigError("ModelConfig: negative modes");
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(split_seed(seed, kStreamInit));
  const double wb = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  const int m1 = retained_rows(cfg.n1, cfg.eff_modes1());
  const int m2h = cfg.eff_modes2() + 1;
  const int n = cfg.tokens();
  for (int l = 0; l < cfg.layers; ++l) {
    LayerParams p;
    p.w_query = Tensor::zeros({cfg.d, cfg.d_k});
    p.w_key = Tensor::zeros({cfg.d, cfg.d_k});
    for (std::size_t i = 0; i < p.w_query.size(); ++i)
      p.w_query.data()[i] = rng.uniform(-wb, wb);
    for (std::size_t i = 0; i < p.w_key.size(); ++i)
      p.w_key.data()[i] = rng.uniform(-wb, wb);
    if (cfg.variant == Variant::kNips) {
      p.fourier_kernel = ComplexTensor::zeros({m1, m2h, cfg.d_k});
      const double rs = 1.0 / (static_cast<double>(m1) * m2h);
      for (std::size_t i = 0; i < 2 * p.fourier_kernel.size(); ++i)
        p.fourier_kernel.data()[i] = rng.normal() * rs;
    } else {
      // Entry scale keeps proj * y * h^2 of the same order as y.
      const double ps = 1.0 / (std::sqrt(static_cast<double>(n)) * cfg.quad_weight());
      p.proj_f = Tensor::zeros({n, n});
      p.proj_u = Tensor::zeros({n, n});
      for (std::size_t i = 0; i < p.proj_f.size(); ++i)
        p.proj_f.data()[i] = rng.normal() * ps / std::sqrt(static_cast<double>(n));
      for (std::size_t i = 0; i < p.proj_u.size(); ++i)
        p.proj_u.data()[i] = rng.normal() * ps / std::sqrt(static_cast<double>(n));
    }
    m.layers.push_back(std::move(p));
  }
  return m;
}

Tensor fourier_filter(const Tensor& y, const ComplexTensor& r,
                      const ModelConfig& cfg) {
  if (y.shape.size() != 2 || y.shape[0] != cfg.tokens())
    throw DimensionError("fourier_filter: expected [tokens x channels]");
  const int ch = y.shape[1];
  Tensor grid_view = y.reshaped({cfg.n1, cfg.n2, ch});
  ComplexTensor spectrum = rfft2(grid_view);
  ComplexTensor filtered =
      spectral_mul(spectrum, r, cfg.eff_modes1(), cfg.eff_modes2());
  return irfft2(filtered, cfg.n2).reshaped({cfg.tokens(), ch});
}

std::pair<Tensor, Tensor> attention_block(const Tensor& g, const Tensor& v,
                                          const LayerParams& params,
                                          const ModelConfig& cfg,
                                          int layer_index) {
  return block_with_projection(
      g, v, params, cfg, layer_index,
      [&](const Tensor& y, bool) { return fourier_filter(y, params.fourier_kernel, cfg); });
}

std::pair<Tensor, Tensor> quadratic_baseline_block(const Tensor& g,
                                                   const Tensor& v,
                                                   const LayerParams& params,
                                                   const ModelConfig& cfg,
                                                   int layer_index) {
  if (cfg.variant == Variant::kNaoWpQuadratic)
    return quadratic_order_block(g, v, params, cfg, layer_index);
  const double h2 = cfg.quad_weight();
  return block_with_projection(
      g, v, params, cfg, layer_index, [&](const Tensor& y, bool f_stream) {
        return scale(matmul(f_stream ? params.proj_f : params.proj_u, y), h2);
      });
}

KernelFactors extract_kernel_factors(const Tensor& g, const Tensor& v,
                                     const LayerParams& last,
                                     const ModelConfig& cfg) {
  check_stream(g, cfg, "extract_kernel");
  check_stream(v, cfg, "extract_kernel");
  Tensor qg = matmul(g, last.w_query);
  Tensor qv = matmul(v, last.w_query);
  Tensor proj_sum;
  if (cfg.variant == Variant::kNips) {
    proj_sum = add(fourier_filter(qg, last.fourier_kernel, cfg),
                   fourier_filter(qv, last.fourier_kernel, cfg));
  } else {
    const double h2 = cfg.quad_weight();
    proj_sum = add(scale(matmul(last.proj_f, qg), h2),
                   scale(matmul(last.proj_u, qv), h2));
  }
  KernelFactors kf;
  kf.a = scale(proj_sum, cfg.scale());
  kf.b = matmul(g, last.w_key);
  return kf;
}

KernelMatrix materialize_kernel(const KernelFactors& kf, const ModelConfig& cfg) {
  Tensor k = matmul_nt(kf.a, kf.b);
  KernelMatrix out;
  out.n_nodes = cfg.tokens();
  out.grid_n = cfg.n1;
  out.quad_w = cfg.quad_weight();
  out.k.assign(k.data(), k.data() + k.size());
  return out;
}

Tensor forward_predict(const KernelFactors& kf, const Tensor& f,
                       const ModelConfig& cfg) {
  Tensor rhs = f.shape.size() == 1 ? f.reshaped({f.shape[0], 1}) : f;
  if (rhs.shape[0] != cfg.tokens())
    throw DimensionError("forward_predict: loading not on the model grid");
  Tensor out = scale(matmul(kf.a, matmul_tn(kf.b, rhs)), cfg.quad_weight());
  return f.shape.size() == 1 ? out.reshaped({f.shape[0]}) : out;
}

KernelFactors model_forward(const Model& model, const Tensor& g0,
                            const Tensor& u0, ForwardDiag* diag) {
  const ModelConfig& cfg = model.cfg;
  if (static_cast<int>(model.layers.size()) != cfg.layers)
    throw ConfigError("model_forward: layer count mismatch");
  Tensor g = g0, v = u0;
  for (int l = 1; l < cfg.layers; ++l) {
    const LayerParams& p = model.layers[static_cast<std::size_t>(l - 1)];
    auto [g2, v2] = cfg.variant == Variant::kNips
                        ? attention_block(g, v, p, cfg, l)
                        : quadratic_baseline_block(g, v, p, cfg, l);
    g = std::move(g2);
    v = std::move(v2);
    if (diag)
      diag->layer_max_abs.push_back(std::max(max_abs(g), max_abs(v)));
  }
  return extract_kernel_factors(g, v, model.layers.back(), cfg);
}

long long count_params(const ModelConfig& cfg) {
  const long long per_w = 2LL * cfg.d * cfg.d_k;
  long long per_layer = per_w;
  if (cfg.variant == Variant::kNips) {
    const long long m1 = retained_rows(cfg.n1, cfg.eff_modes1());
    const long long m2h = cfg.eff_modes2() + 1;
    per_layer += 2LL * m1 * m2h * cfg.d_k;  // complex entries count as two
  } else {
    per_layer += 2LL * cfg.tokens() * cfg.tokens();
  }
  return per_layer * cfg.layers;
}

Tensor materialize_projection(const ComplexTensor& r, int channel,
                              const ModelConfig& cfg) {
  const int n = cfg.tokens();
  if (channel < 0 || channel >= r.shape[2])
    throw DimensionError("materialize_projection: channel out of range");
  // Column-by-column application to unit impulses; divided by h^2 so that
  // proj * y * h^2 equals the spectral filter.
  ComplexTensor rc = ComplexTensor::zeros({r.shape[0], r.shape[1], 1});
  for (int a = 0; a < r.shape[0]; ++a)
    for (int b = 0; b < r.shape[1]; ++b) {
      const std::size_t src =
          2 * ((static_cast<std::size_t>(a) * r.shape[1] + b) * r.shape[2] +
               static_cast<std::size_t>(channel));
      const std::size_t dst =
          2 * (static_cast<std::size_t>(a) * r.shape[1] + b);
      rc.data()[dst] = r.data()[src];
      rc.data()[dst + 1] = r.data()[src + 1];
    }
  ModelConfig one = cfg;
  Tensor w = Tensor::zeros({n, n});
  const double inv_h2 = 1.0 / cfg.quad_weight();
  for (int col = 0; col < n; ++col) {
    Tensor e = Tensor::zeros({n, 1});
    e.data()[col] = 1.0;
    Tensor y = fourier_filter(e, rc, one);
    for (int row = 0; row < n; ++row)
      w.data()[static_cast<std::size_t>(row) * n + col] = y.data()[row] * inv_h2;
  }
  return w;
}

Model watch_params(const Model& model, Tape& tape) {
  Model out;
  out.cfg = model.cfg;
  for (const LayerParams& p : model.layers) {
    LayerParams q;
    q.w_query = tape.watch(p.w_query);
    q.w_key = tape.watch(p.w_key);
    if (model.cfg.variant == Variant::kNips) {
      q.fourier_kernel = tape.watch(p.fourier_kernel);
    } else {
      q.proj_f = tape.watch(p.proj_f);
      q.proj_u = tape.watch(p.proj_u);
    }
    out.layers.push_back(std::move(q));
  }
  return out;
}

std::vector<ParamBlock> param_blocks(Model& model) {
  std::vector<ParamBlock> out;
  for (LayerParams& p : model.layers) {
    out.push_back({p.w_query.data(), p.w_query.size()});
    out.push_back({p.w_key.data(), p.w_key.size()});
    if (model.cfg.variant == Variant::kNips) {
      out.push_back({p.fourier_kernel.data(), 2 * p.fourier_kernel.size()});
    } else {
      out.push_back({p.proj_f.data(), p.proj_f.size()});
      out.push_back({p.proj_u.data(), p.proj_u.size()});
    }
  }
  return out;
}

std::vector<std::optional<std::span<const double>>> param_grads(
    const Model& watched, const Tape& tape) {
  std::vector<std::optional<std::span<const double>>> out;
  for (const LayerParams& p : watched.layers) {
    out.push_back(tape.grad(p.w_query));
    out.push_back(tape.grad(p.w_key));
    if (watched.cfg.variant == Variant::kNips) {
      out.push_back(tape.grad(p.fourier_kernel));
    } else {
      out.push_back(tape.grad(p.proj_f));
      out.push_back(tape.grad(p.proj_u));
    }
  }
  return out;
}

std::size_t param_count(const Model& model) {
  std::size_t n = 0;
  for (const LayerParams& p : model.layers) {
    n += p.w_query.size() + p.w_key.size();
    if (model.cfg.variant == Variant::kNips)
      n += 2 * p.fourier_kernel.size();
    else
      n += p.proj_f.size() + p.proj_u.size();
  }
  return n;
}

Model regrid(const Model& model, int n1, int n2) {
  if (model.cfg.variant != Variant::kNips)
    throw ConfigError("regrid: only the spectral variant transfers across grids");
  Model out = model;
  out.cfg.n1 = n1;
  out.cfg.n2 = n2;
  const int m1 = retained_rows(n1, out.cfg.eff_modes1());
  const int m2h = out.cfg.eff_modes2() + 1;
  for (const LayerParams& p : out.layers)
    if (p.fourier_kernel.shape[0] != m1 || p.fourier_kernel.shape[1] != m2h)
      throw DimensionError("regrid: retained modes do not fit the new grid");
  return out;
}

}  // namespace nips
