#pragma once

#include <cstddef>
#include <vector>

namespace nips {

/// Bytes currently held by live tensor storages.
std::size_t live_tensor_bytes();

/// High-water mark of live tensor bytes since the last reset.
std::size_t peak_alloc_bytes();

/// Resets the high-water mark to the current live byte count.
void reset_peak_alloc();

/// Reference-counted f64 buffer backing every tensor and gradient.
/// Registers its byte size with the live/peak counters for its lifetime.
class Storage {
 public:
  explicit Storage(std::size_t n);
  ~Storage();
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;

  double* data() { return buf_.data(); }
  const double* data() const { return buf_.data(); }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<double> buf_;
};

}  // namespace nips
