#include "nips/rng.hpp"

#include <cmath>

#include "nips/error.hpp"

namespace nips {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0x9E3779B97F4A7C15ULL * (index + 1));
  return splitmix64(s);
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Uniforms in (0, 1] so the log argument is never zero.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::uniform_int(std::uint64_t bound) {
  if (bound == 0) throw ContractError("uniform_int: bound must be >= 1");
  std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % bound;
}

}  // namespace nips
