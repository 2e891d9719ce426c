#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nips/kernel_matrix.hpp"
#include "nips/rng.hpp"
#include "nips/tensor.hpp"

namespace nips {

/// nips: Fourier-kernel queries (the retained-mode multipliers).
/// nao_wp_*: dense per-stream square projection matrices; the quadratic
/// flavor materializes token-pair interactions, the linear flavor evaluates
/// the same map in factored order.
enum class Variant { kNips, kNaoWpQuadratic, kNaoWpLinear };

enum class NormPlacement { kFirstLayerBoth, kAllLayersBoth };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string to_string(NormPlacement p);
NormPlacement norm_placement_from_string(const std::string& s);

struct ModelConfig {
  int layers = 2;  // L; iterative blocks run for l = 1..L-1, kernel at L
  int d = 50;      // in-context pairs per sample (embedding dimension)
  int d_k = 40;    // query/key projection dimension
  int modes1 = 12, modes2 = 12;  // retained frequency caps per axis
  int n1 = 21, n2 = 21;          // grid extents (tokens = n1 * n2)
  NormPlacement norm_placement = NormPlacement::kFirstLayerBoth;
  Variant variant = Variant::kNips;

  int tokens() const { return n1 * n2; }
  double quad_weight() const {
    return 1.0 / (static_cast<double>(n1 - 1) * (n2 - 1));
  }
  double scale() const;  // 1 / sqrt(d_k)
  int eff_modes1() const { return modes1 < n1 / 2 ? modes1 : n1 / 2; }
  int eff_modes2() const { return modes2 < n2 / 2 ? modes2 : n2 / 2; }
  void validate() const;
};

struct LayerParams {
  Tensor w_query;  // d x d_k
  Tensor w_key;    // d x d_k
  // nips
  ComplexTensor fourier_kernel;  // m1 x m2h x d_k, per-channel multipliers
  // nao_wp_*
  Tensor proj_f, proj_u;  // N x N dense projections, one per stream
};

struct Model {
  ModelConfig cfg;
  std::vector<LayerParams> layers;  // size cfg.layers

  static Model init(const ModelConfig& cfg, std::uint64_t seed);
};

/// Low-rank kernel factors: K = A B^T with A, B of shape N x d_k.
struct KernelFactors {
  Tensor a, b;
};

/// Max |activation| after each iterative block, for fault diagnostics.
struct ForwardDiag {
  std::vector<double> layer_max_abs;
};

/// Per-channel spectral convolution of the query features: reshape each of
/// the d_k columns to the grid, rfft2, multiply retained modes by that
/// channel's multiplier slice (zero outside), irfft2, flatten. No channel
/// mixing.
Tensor fourier_filter(const Tensor& y, const ComplexTensor& r,
                      const ModelConfig& cfg);

/// One iterative attention update of both streams (f = loadings stream in g0,
/// u = solutions stream in v0). layer_index is 1-based; it selects the
/// normalization axes under the configured placement.
std::pair<Tensor, Tensor> attention_block(const Tensor& g, const Tensor& v,
                                          const LayerParams& params,
                                          const ModelConfig& cfg,
                                          int layer_index);

/// Same contract with the spectral projection replaced by the dense
/// per-stream matrices: y -> proj * y * h^2. Association order follows
/// cfg.variant (token-pair matrices materialized for kNaoWpQuadratic).
std::pair<Tensor, Tensor> quadratic_baseline_block(const Tensor& g,
                                                   const Tensor& v,
                                                   const LayerParams& params,
                                                   const ModelConfig& cfg,
                                                   int layer_index);

/// Final-layer kernel factors from the (L-1)-th block outputs.
KernelFactors extract_kernel_factors(const Tensor& g, const Tensor& v,
                                     const LayerParams& last,
                                     const ModelConfig& cfg);

KernelMatrix materialize_kernel(const KernelFactors& kf, const ModelConfig& cfg);

/// u = h^2 * A * (B^T f) without materializing K; f is [N] or [N x m].
Tensor forward_predict(const KernelFactors& kf, const Tensor& f,
                       const ModelConfig& cfg);

/// Runs the full context pass on one sample's d pairs.
KernelFactors model_forward(const Model& model, const Tensor& g0,
                            const Tensor& u0, ForwardDiag* diag = nullptr);

/// Exact learnable-scalar count (complex entries count as two).
long long count_params(const ModelConfig& cfg);

/// Dense N x N materialization of one fourier_kernel channel divided by h^2:
/// with proj_f = proj_u = this matrix, the nao_wp blocks reproduce the nips
/// block exactly.
Tensor materialize_projection(const ComplexTensor& r, int channel,
                              const ModelConfig& cfg);

/// Tape-bound view of the parameters (storage shared with `model`).
Model watch_params(const Model& model, Tape& tape);

/// Flat parameter blocks in declaration order (per layer: w_query, w_key,
/// then fourier_kernel or proj_f, proj_u). Complex blocks are interleaved.
struct ParamBlock {
  double* ptr;
  std::size_t len;
};
std::vector<ParamBlock> param_blocks(Model& model);
std::vector<std::optional<std::span<const double>>> param_grads(
    const Model& watched, const Tape& tape);
std::size_t param_count(const Model& model);

/// Copies a model onto a different grid; parameters transfer unchanged (the
/// retained modes are resolution independent). Throws when the retained
/// modes do not fit the new grid.
Model regrid(const Model& model, int n1, int n2);

// --- checkpoint container ---
//
// Layout: magic "NIPSCK1\0", u32 little-endian header length, UTF-8 JSON
// header, then raw float64 parameter blocks in declaration order, followed
// by the Adam moment buffers when present.

struct Checkpoint {
  Model model;
  int epoch = 0;
  long long adam_t = 0;
  std::vector<double> adam_m, adam_v;  // empty when no optimizer state
  std::string loss_digest;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

/// Canonical JSON for a config (the checkpoint header's "cfg" field);
/// digest input for reports.
std::string model_config_json(const ModelConfig& cfg);

}  // namespace nips
