#include "nips/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace nips {

namespace {

constexpr std::uint64_t kStreamEpoch = 21;

std::vector<double> column_norms(const Tensor& t, double quad_w) {
  const int n = t.shape[0], d = t.shape[1];
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double v = t.data()[static_cast<std::size_t>(i) * d + j];
      out[static_cast<std::size_t>(j)] += v * v;
    }
  for (double& v : out) v = std::sqrt(quad_w * v);
  return out;
}

std::string diag_string(const ForwardDiag& diag) {
  std::string s = "layer max |activation|:";
  for (std::size_t i = 0; i < diag.layer_max_abs.size(); ++i)
    s += " [" + std::to_string(i + 1) + "] " + std::to_string(diag.layer_max_abs[i]);
  return s;
}

double sample_loss_value(const Model& model, const TrainSample& s,
                         ForwardDiag* diag) {
  KernelFactors kf = model_forward(model, s.g, s.u, diag);
  Tensor pred = forward_predict(kf, s.g, model.cfg);
  Tensor loss = relative_l2_loss(pred, s.u, model.cfg.quad_weight());
  return loss.data()[0];
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("TrainConfig: learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("TrainConfig: betas must lie in (0, 1)");
  if (epochs < 0 || batch_size < 1) throw ConfigError("TrainConfig: bad loop sizes");
  if (decay_every < 1) throw ConfigError("TrainConfig: decay_every must be >= 1");
}

double TrainConfig::lr_at_epoch(int epoch) const {
  return lr * std::pow(lr_decay, epoch / decay_every);
}

Tensor relative_l2_loss(const Tensor& pred, const Tensor& target,
                        double quad_w) {
  if (pred.shape != target.shape || pred.shape.size() != 2)
    throw DimensionError("relative_l2_loss: matching [N x d] tensors required");
  const int d = pred.shape[1];
  std::vector<double> denom = column_norms(target, quad_w);
  for (double v : denom)
    if (!(v > 0.0))
      throw ContractError("relative_l2_loss: zero-norm target column");
  std::vector<double> w(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j)
    w[static_cast<std::size_t>(j)] = 1.0 / (denom[static_cast<std::size_t>(j)] * d);

  Tensor diff = sub(pred, target);
  Tensor col = sum_cols(mul(diff, diff));
  Tensor num = sqrt_ew(scale(col, quad_w));
  return sum(mul(num, Tensor::from({d}, std::move(w))));
}

void adam_step(std::span<double> param, std::span<const double> grad,
               std::span<double> m, std::span<double> v, long long t,
               const TrainConfig& cfg, double lr) {
  if (param.size() != grad.size() || param.size() != m.size() ||
      param.size() != v.size())
    throw DimensionError("adam_step: buffer sizes differ");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + cfg.weight_decay * param[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps_adam);
  }
}

std::string TrainReport::loss_digest() const {
  std::uint64_t h = fnv1a64(&initial_loss, sizeof(double));
  for (const EpochStat& e : epochs) h = fnv1a64(&e.loss, sizeof(double), h);
  return hex64(h);
}

void TrainReport::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f << "epoch,loss,time_s,peak_bytes\n";
  char buf[64];
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", epochs[i].loss);
    f << (i + 1) << "," << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", epochs[i].time_s);
    f << buf << "," << epochs[i].peak_bytes << "\n";
  }
}

double mean_sample_loss(const Model& model,
                        const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw ContractError("mean_sample_loss: no samples");
  double acc = 0.0;
  for (const TrainSample& s : samples) acc += sample_loss_value(model, s, nullptr);
  return acc / static_cast<double>(samples.size());
}

TrainReport fit(Model& model, const std::vector<TrainSample>& samples,
                const TrainConfig& cfg, OptimState& state) {
  cfg.validate();
  if (samples.empty()) throw ContractError("fit: no training samples");
  for (const TrainSample& s : samples)
    if (s.g.shape != std::vector<int>{model.cfg.tokens(), model.cfg.d})
      throw DimensionError("fit: sample shape does not match the model config");

  const std::size_t total = param_count(model);
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  } else if (state.m.size() != total || state.v.size() != total) {
    throw ContractError("fit: optimizer state does not match the model");
  }

  TrainReport report;
  report.initial_loss = mean_sample_loss(model, samples);
  if (cfg.epochs == 0) return report;

  auto blocks = param_blocks(model);
  std::vector<double> accum(total, 0.0);
  std::vector<std::size_t> order(samples.size());

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    reset_peak_alloc();
    Rng rng(split_seed(split_seed(cfg.seed, kStreamEpoch),
                       static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    const double lr = cfg.lr_at_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), order.size() - done);
      std::fill(accum.begin(), accum.end(), 0.0);
      for (std::size_t k = 0; k < batch; ++k) {
        const TrainSample& s = samples[order[done + k]];
        Tape tape;
        Model watched = watch_params(model, tape);
        ForwardDiag diag;
        KernelFactors kf = model_forward(watched, s.g, s.u, &diag);
        Tensor pred = forward_predict(kf, s.g, model.cfg);
        Tensor loss = relative_l2_loss(pred, s.u, model.cfg.quad_weight());
        const double lv = loss.data()[0];
        if (!std::isfinite(lv))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", sample " + std::to_string(order[done + k]) +
                              "; " + diag_string(diag));
        loss_sum += lv;
        tape.backward(loss);
        auto grads = param_grads(watched, tape);
        std::size_t off = 0;
        for (std::size_t b = 0; b < grads.size(); ++b) {
          const std::size_t len = blocks[b].len;
          if (grads[b])
            for (std::size_t i = 0; i < len; ++i) accum[off + i] += (*grads[b])[i];
          off += len;
        }
      }
      const double inv_batch = 1.0 / static_cast<double>(batch);
      for (double& v : accum) v *= inv_batch;
      ++state.t;
      std::size_t off = 0;
      for (const auto& b : blocks) {
        adam_step({b.ptr, b.len}, {accum.data() + off, b.len},
                  {state.m.data() + off, b.len}, {state.v.data() + off, b.len},
                  state.t, cfg, lr);
        off += b.len;
      }
      done += batch;
    }

    EpochStat stat;
    stat.loss = loss_sum / static_cast<double>(samples.size());
    stat.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stat.peak_bytes = peak_alloc_bytes();
    report.epochs.push_back(stat);
    state.epoch = epoch + 1;

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        !cfg.checkpoint_dir.empty()) {
      Checkpoint ck;
      ck.model = model;
      ck.epoch = state.epoch;
      ck.adam_t = state.t;
      ck.adam_m = state.m;
      ck.adam_v = state.v;
      ck.loss_digest = report.loss_digest();
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.nipsck", epoch + 1);
      save_checkpoint(cfg.checkpoint_dir + "/" + name, ck);
    }
  }
  return report;
}

TrainReport fit(Model& model, const std::vector<TrainSample>& samples,
                const TrainConfig& cfg) {
  OptimState state;
  return fit(model, samples, cfg, state);
}

}  // namespace nips
