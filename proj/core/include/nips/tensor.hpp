#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nips/alloc.hpp"
#include "nips/error.hpp"

namespace nips {

class Tape;

/// Dense row-major tensor of 64-bit floats. Copies share storage; data is
/// treated as immutable once an op has produced it. A tensor participates in
/// reverse-mode differentiation when `node >= 0`, which ties it to one Tape.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<Storage> store;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<int> shape, std::vector<double> values);

  std::size_t size() const;
  double* data() { return store->data(); }
  const double* data() const { return store->data(); }
  std::span<const double> view() const { return {store->data(), size()}; }
  bool requires_grad() const { return node >= 0; }
  int extent(std::size_t axis) const;

  /// Same storage and tape node under a new shape; sizes must match.
  Tensor reshaped(std::vector<int> new_shape) const;
};

/// Complex tensor stored as interleaved (re, im) f64 pairs. The shape lists
/// logical complex extents; the half-spectrum of a real n1 x n2 transform has
/// shape n1 x (n2/2 + 1) per channel.
struct ComplexTensor {
  std::vector<int> shape;
  std::shared_ptr<Storage> store;  // 2 * size() doubles
  Tape* tape = nullptr;
  int node = -1;

  ComplexTensor() = default;

  static ComplexTensor zeros(std::vector<int> shape);
  static ComplexTensor from_interleaved(std::vector<int> shape,
                                        std::vector<double> values);

  std::size_t size() const;
  double* data() { return store->data(); }
  const double* data() const { return store->data(); }
  bool requires_grad() const { return node >= 0; }
};

/// Recording tape for reverse-mode differentiation. Nodes are appended in
/// execution order, which is already topological; backward visits them once
/// in reverse. Gradient buffers live on the tape, keyed by node id, and are
/// allocated lazily so untouched subgraphs stay cheap.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf; the returned tensor shares storage with the argument.
  Tensor watch(const Tensor& t);
  ComplexTensor watch(const ComplexTensor& t);

  /// Runs reverse accumulation from a scalar loss. May be called once per
  /// tape; a second call without a fresh tape is a contract error.
  void backward(const Tensor& loss);

  /// Gradient of the last backward() w.r.t. `t`, or nullopt when the loss
  /// did not reach it (detached graph). Complex gradients are interleaved
  /// (d/dRe, d/dIm) pairs.
  std::optional<std::span<const double>> grad(const Tensor& t) const;
  std::optional<std::span<const double>> grad(const ComplexTensor& t) const;

  bool backward_done() const { return ran_; }
  std::size_t node_count() const { return nodes_.size(); }

  // --- op implementation interface ---
  using BackFn = std::function<void(Tape&, const double*)>;
  int record(const char* op, std::size_t out_len, std::vector<int> inputs,
             BackFn fn);
  /// Gradient accumulation buffer for a node, allocated (zeroed) on demand.
  double* grad_acc(int node);
  const double* grad_of(int node) const;

 private:
  struct Node {
    const char* op;
    std::vector<int> inputs;
    std::size_t len;
    BackFn back;
    std::unique_ptr<Storage> grad;
  };
  std::vector<Node> nodes_;
  bool ran_ = false;
};

// --- elementwise and reduction ops (all differentiable) ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sqrt_ew(const Tensor& a);

/// Sum of all entries; returns shape {1}.
Tensor sum(const Tensor& a);
/// Column sums of an [n x d] tensor; returns shape {d}.
Tensor sum_cols(const Tensor& a);

// --- matrix products ---

/// c[i,j] = sum_k a[i,k] b[k,j]; gradients dA = dC B^T, dB = A^T dC.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T b for a[k x m], b[k x n] -> [m x n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a b^T for a[m x k], b[n x k] -> [m x n].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// Normalizes jointly over `axes`: (x - mean) / sqrt(var + eps), no affine
/// parameters. Mean and variance are taken over the given axes per slice of
/// the remaining axes.
Tensor layer_norm(const Tensor& x, const std::vector<int>& axes,
                  double eps = 1e-5);

// --- real 2-D Fourier transforms (per trailing channel) ---
//
// Convention: rfft2 is the unnormalized forward DFT storing the half
// spectrum (columns k2 = 0..n2/2); irfft2 applies the 1/(n1*n2) factor and
// reconstructs dropped columns by conjugate symmetry, returning the real
// part. Both are exact linear maps and differentiable.

/// x has shape [n1, n2, c]; result [n1, n2/2 + 1, c].
ComplexTensor rfft2(const Tensor& x);

/// X has shape [n1, h2, c] with h2 == n2/2 + 1; result [n1, n2, c].
Tensor irfft2(const ComplexTensor& X, int n2);

/// Per-channel multiplication of retained low-frequency modes by r; all
/// other modes are zeroed. Rows retained: FFT index k1 with
/// min(k1, n1 - k1) <= kmax1 (wrap order: 0..kmax1 then negative side);
/// columns retained: k2 <= kmax2. r has shape [m1, m2h, c] with
/// m1 = min(2*kmax1 + 1, n1), m2h = kmax2 + 1.
ComplexTensor spectral_mul(const ComplexTensor& X, const ComplexTensor& r,
                           int kmax1, int kmax2);

// --- non-differentiable helpers ---

double max_abs(const Tensor& a);
double max_abs(const ComplexTensor& a);

/// Number of retained row modes for a given cap (see spectral_mul).
int retained_rows(int n1, int kmax1);

}  // namespace nips
