#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nips/dataset.hpp"
#include "nips/model.hpp"

namespace nips {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  double weight_decay = 0.0;
  int epochs = 100;
  int batch_size = 8;  // samples per optimizer step
  double lr_decay = 0.5;
  int decay_every = 100;  // epochs between multiplicative decays
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: no periodic checkpoints
  std::string checkpoint_dir;

  void validate() const;
  double lr_at_epoch(int epoch) const;
};

/// Mean over columns of ||pred_j - target_j|| / ||target_j|| under the
/// discrete L2 norm sqrt(quad_w * sum of squares). Differentiable in pred.
Tensor relative_l2_loss(const Tensor& pred, const Tensor& target,
                        double quad_w);

/// Standard bias-corrected Adam update of one flat block, in place.
void adam_step(std::span<double> param, std::span<const double> grad,
               std::span<double> m, std::span<double> v, long long t,
               const TrainConfig& cfg, double lr);

/// Optimizer state carried across fit calls (and checkpoints) so a resumed
/// run reproduces the uninterrupted trajectory exactly.
struct OptimState {
  std::vector<double> m, v;
  long long t = 0;
  int epoch = 0;  // next epoch to run
};

struct EpochStat {
  double loss = 0;
  double time_s = 0;
  std::size_t peak_bytes = 0;
};

struct TrainReport {
  double initial_loss = 0;
  std::vector<EpochStat> epochs;
  std::string loss_digest() const;
  void write_csv(const std::string& path) const;
};

/// Trains in place: per epoch shuffles samples with a seed derived from
/// (cfg.seed, epoch), builds each sample's kernel from its own d pairs,
/// predicts those pairs, and takes one Adam step per batch. Aborts with a
/// TrainingError carrying activation magnitudes when the loss goes
/// non-finite.
TrainReport fit(Model& model, const std::vector<TrainSample>& samples,
                const TrainConfig& cfg, OptimState& state);

/// Fresh-run convenience overload.
TrainReport fit(Model& model, const std::vector<TrainSample>& samples,
                const TrainConfig& cfg);

/// Mean sample loss under the current parameters (no gradients).
double mean_sample_loss(const Model& model,
                        const std::vector<TrainSample>& samples);

}  // namespace nips
