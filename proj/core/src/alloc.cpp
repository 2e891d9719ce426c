#include "nips/alloc.hpp"

#include <atomic>

namespace nips {

namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

void bump_peak() {
  std::size_t live = g_live.load(std::memory_order_relaxed);
  std::size_t peak = g_peak.load(std::memory_order_relaxed);
  while (live > peak &&
         !g_peak.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
  }
}
}  // namespace

std::size_t live_tensor_bytes() { return g_live.load(std::memory_order_relaxed); }

std::size_t peak_alloc_bytes() { return g_peak.load(std::memory_order_relaxed); }

void reset_peak_alloc() {
  g_peak.store(g_live.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

Storage::Storage(std::size_t n) : buf_(n, 0.0) {
  g_live.fetch_add(n * sizeof(double), std::memory_order_relaxed);
  bump_peak();
}

Storage::~Storage() {
  g_live.fetch_sub(buf_.size() * sizeof(double), std::memory_order_relaxed);
}

}  // namespace nips
