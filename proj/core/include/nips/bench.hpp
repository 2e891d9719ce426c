#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nips/model.hpp"

namespace nips {

struct BenchConfig {
  std::vector<int> token_counts;  // each must be a perfect square
  int d = 16;
  int d_k = 16;
  int layers = 2;
  int samples = 4;  // synthetic samples per timed epoch
  int batch_size = 2;
  double mem_cap_gb = 8.0;  // skip marker threshold for dense variants
  std::uint64_t seed = 0;
};

struct BenchRow {
  int tokens = 0;
  std::string variant;
  double epoch_time_s = -1;
  std::size_t peak_bytes = 0;
  bool skipped = false;
  std::string note;
};

/// Estimated resident bytes of a variant's weights plus gradient and Adam
/// buffers (4 copies of the parameter vector); the skip heuristic.
std::size_t estimate_state_bytes(const ModelConfig& cfg);

/// Times one training epoch of each variant (nips, nao-wp-linear,
/// nao-wp-quadratic) per token count on synthetic data; dense variants whose
/// state estimate exceeds the cap are recorded as skipped.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

}  // namespace nips
