#include "nips/bench.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "nips/trainer.hpp"

namespace nips {

namespace {

constexpr std::uint64_t kStreamBenchData = 41;

int side_of(int tokens) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens))));
  if (n * n != tokens || n < 3)
    throw ContractError("bench: token counts must be perfect squares >= 9");
  return n;
}

std::vector<TrainSample> synthetic_samples(const ModelConfig& cfg, int count,
                                           std::uint64_t seed) {
  Rng rng(split_seed(seed, kStreamBenchData));
  std::vector<TrainSample> out;
  for (int s = 0; s < count; ++s) {
    TrainSample t;
    t.system_id = s;
    t.permutation_tag = s;
    t.g = Tensor::zeros({cfg.tokens(), cfg.d});
    t.u = Tensor::zeros({cfg.tokens(), cfg.d});
    for (std::size_t i = 0; i < t.g.size(); ++i) t.g.data()[i] = rng.normal();
    for (std::size_t i = 0; i < t.u.size(); ++i) t.u.data()[i] = rng.normal();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::size_t estimate_state_bytes(const ModelConfig& cfg) {
  // parameter vector + gradient accumulator + two Adam moments
  return static_cast<std::size_t>(count_params(cfg)) * sizeof(double) * 4;
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  if (cfg.token_counts.empty()) throw ContractError("bench: no token counts");
  const Variant variants[] = {Variant::kNips, Variant::kNaoWpLinear,
                              Variant::kNaoWpQuadratic};
  std::vector<BenchRow> rows;
  for (int tokens : cfg.token_counts) {
    const int n = side_of(tokens);
    for (Variant variant : variants) {
      ModelConfig mc;
      mc.layers = cfg.layers;
      mc.d = cfg.d;
      mc.d_k = cfg.d_k;
      mc.n1 = mc.n2 = n;
      mc.modes1 = mc.modes2 = 12;
      mc.variant = variant;

      BenchRow row;
      row.tokens = tokens;
      row.variant = to_string(variant);
      const std::size_t est = estimate_state_bytes(mc);
      if (variant != Variant::kNips &&
          static_cast<double>(est) > cfg.mem_cap_gb * 1e9) {
        row.skipped = true;
        row.note = "exceeds memory budget";
        rows.push_back(row);
        continue;
      }

      auto samples = synthetic_samples(mc, cfg.samples, cfg.seed);
      Model model = Model::init(mc, cfg.seed);
      TrainConfig tc;
      tc.epochs = 1;
      tc.batch_size = cfg.batch_size;
      tc.seed = cfg.seed;
      TrainReport rep = fit(model, samples, tc);
      row.epoch_time_s = rep.epochs.at(0).time_s;
      row.peak_bytes = rep.epochs.at(0).peak_bytes;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f << "tokens,variant,epoch_time_s,peak_bytes,skipped,note\n";
  char buf[64];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.epoch_time_s);
    f << r.tokens << "," << r.variant << "," << (r.skipped ? "" : buf) << ","
      << (r.skipped ? "" : std::to_string(r.peak_bytes)) << ","
      << (r.skipped ? "1" : "0") << "," << r.note << "\n";
  }
}

}  // namespace nips
