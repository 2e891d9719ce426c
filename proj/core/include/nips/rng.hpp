#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace nips {

/// One SplitMix64 step; advances the state and returns the next value.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent stream seed from a master seed and a stream index.
/// Used everywhere a module fans out work (per-system fields, per-epoch
/// shuffles) so that streams are reproducible and order-independent.
std::uint64_t split_seed(std::uint64_t master, std::uint64_t index);

/// Deterministic random generator. Draw algorithms (uniform, normal, bounded
/// ints, shuffling) are implemented here rather than taken from
/// <random> distributions, so sequences are identical across standard
/// libraries and platforms for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes uniforms in pairs.
  double normal();

  /// Uniform integer in [0, bound); rejection sampling, bound >= 1.
  std::uint64_t uniform_int(std::uint64_t bound);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nips
