#include "nips/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nips {

namespace {

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape");
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

Tape* merge_tapes(Tape* a, Tape* b) {
  if (a && b && a != b)
    throw ContractError("operands recorded on different tapes");
  return a ? a : b;
}

Tape* tape_of(const Tensor& t) { return t.node >= 0 ? t.tape : nullptr; }
Tape* tape_of(const ComplexTensor& t) { return t.node >= 0 ? t.tape : nullptr; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace

// --- Tensor / ComplexTensor ---

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.store = std::make_shared<Storage>(product(t.shape));
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill_n(t.data(), t.size(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  Tensor t = zeros(std::move(shape));
  if (values.size() != t.size())
    throw DimensionError("Tensor::from: value count does not match shape");
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

std::size_t Tensor::size() const { return product(shape); }

int Tensor::extent(std::size_t axis) const {
  if (axis >= shape.size()) throw DimensionError("axis out of range");
  return shape[axis];
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  if (product(new_shape) != size())
    throw DimensionError("reshaped: element count mismatch");
  Tensor t = *this;
  t.shape = std::move(new_shape);
  return t;
}

ComplexTensor ComplexTensor::zeros(std::vector<int> shape) {
  ComplexTensor t;
  t.shape = std::move(shape);
  t.store = std::make_shared<Storage>(2 * product(t.shape));
  return t;
}

ComplexTensor ComplexTensor::from_interleaved(std::vector<int> shape,
                                              std::vector<double> values) {
  ComplexTensor t = zeros(std::move(shape));
  if (values.size() != 2 * t.size())
    throw DimensionError("ComplexTensor: value count does not match shape");
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

std::size_t ComplexTensor::size() const { return product(shape); }

// --- Tape ---

int Tape::record(const char* op, std::size_t out_len, std::vector<int> inputs,
                 BackFn fn) {
  if (ran_) throw ContractError("tape already consumed by backward");
  nodes_.push_back(Node{op, std::move(inputs), out_len, std::move(fn), nullptr});
  return static_cast<int>(nodes_.size()) - 1;
}

double* Tape::grad_acc(int node) {
  Node& n = nodes_.at(static_cast<std::size_t>(node));
  if (!n.grad) n.grad = std::make_unique<Storage>(n.len);
  return n.grad->data();
}

const double* Tape::grad_of(int node) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(node));
  return n.grad ? n.grad->data() : nullptr;
}

Tensor Tape::watch(const Tensor& t) {
  if (t.node >= 0) {
    if (t.tape != this) throw ContractError("tensor already on another tape");
    return t;
  }
  Tensor out = t;
  out.tape = this;
  out.node = record("leaf", t.size(), {}, nullptr);
  return out;
}

ComplexTensor Tape::watch(const ComplexTensor& t) {
  if (t.node >= 0) {
    if (t.tape != this) throw ContractError("tensor already on another tape");
    return t;
  }
  ComplexTensor out = t;
  out.tape = this;
  out.node = record("leaf", 2 * t.size(), {}, nullptr);
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (ran_) throw ContractError("backward called twice on one tape");
  if (loss.size() != 1)
    throw ContractError("backward requires a scalar loss");
  if (loss.node >= 0 && loss.tape != this)
    throw ContractError("loss recorded on a different tape");
  ran_ = true;
  if (loss.node < 0) return;  // detached: all gradients stay empty
  grad_acc(loss.node)[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad && n.back) n.back(*this, n.grad->data());
  }
}

std::optional<std::span<const double>> Tape::grad(const Tensor& t) const {
  if (t.node < 0 || t.tape != this) return std::nullopt;
  const double* g = grad_of(t.node);
  if (!g) return std::nullopt;
  return std::span<const double>{g, t.size()};
}

std::optional<std::span<const double>> Tape::grad(const ComplexTensor& t) const {
  if (t.node < 0 || t.tape != this) return std::nullopt;
  const double* g = grad_of(t.node);
  if (!g) return std::nullopt;
  return std::span<const double>{g, 2 * t.size()};
}

// --- elementwise ---

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_ew(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                 Bwd bwd) {
  check_same_shape(a, b, name);
  Tensor c = Tensor::zeros(a.shape);
  const std::size_t n = c.size();
  fwd(c.data(), a.data(), b.data(), n);
  Tape* tp = merge_tapes(tape_of(a), tape_of(b));
  if (tp) {
    int an = a.node, bn = b.node;
    auto as = a.store, bs = b.store;
    c.tape = tp;
    c.node = tp->record(name, n, {an, bn},
                        [an, bn, as, bs, n, bwd](Tape& t, const double* g) {
                          double* ga = an >= 0 ? t.grad_acc(an) : nullptr;
                          double* gb = bn >= 0 ? t.grad_acc(bn) : nullptr;
                          bwd(ga, gb, as->data(), bs->data(), g, n);
                        });
  }
  return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "add", a, b,
      [](double* c, const double* x, const double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = x[i] + y[i];
      },
      [](double* ga, double* gb, const double*, const double*, const double* g,
         std::size_t n) {
        if (ga)
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (gb)
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "sub", a, b,
      [](double* c, const double* x, const double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = x[i] - y[i];
      },
      [](double* ga, double* gb, const double*, const double*, const double* g,
         std::size_t n) {
        if (ga)
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (gb)
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(
      "mul", a, b,
      [](double* c, const double* x, const double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) c[i] = x[i] * y[i];
      },
      [](double* ga, double* gb, const double* x, const double* y,
         const double* g, std::size_t n) {
        if (ga)
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
        if (gb)
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * x[i];
      });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  if (Tape* tp = tape_of(a)) {
    int an = a.node;
    out.tape = tp;
    out.node = tp->record("scale", n, {an},
                          [an, c, n](Tape& t, const double* g) {
                            double* ga = t.grad_acc(an);
                            for (std::size_t i = 0; i < n; ++i)
                              ga[i] += g[i] * c;
                          });
  }
  return out;
}

Tensor sqrt_ew(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double v = a.data()[i];
    if (v < 0.0) throw DomainError("sqrt_ew: negative input");
    out.data()[i] = std::sqrt(v);
  }
  if (Tape* tp = tape_of(a)) {
    int an = a.node;
    auto ys = out.store;
    out.tape = tp;
    out.node = tp->record("sqrt", n, {an},
                          [an, ys, n](Tape& t, const double* g) {
                            double* ga = t.grad_acc(an);
                            const double* y = ys->data();
                            for (std::size_t i = 0; i < n; ++i)
                              ga[i] += g[i] * 0.5 / y[i];
                          });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({1});
  const std::size_t n = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a.data()[i];
  out.data()[0] = acc;
  if (Tape* tp = tape_of(a)) {
    int an = a.node;
    out.tape = tp;
    out.node = tp->record("sum", 1, {an}, [an, n](Tape& t, const double* g) {
      double* ga = t.grad_acc(an);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    });
  }
  return out;
}

Tensor sum_cols(const Tensor& a) {
  if (a.shape.size() != 2) throw DimensionError("sum_cols expects a matrix");
  const int rows = a.shape[0], cols = a.shape[1];
  Tensor out = Tensor::zeros({cols});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.data()[j] += a.data()[i * cols + j];
  if (Tape* tp = tape_of(a)) {
    int an = a.node;
    out.tape = tp;
    out.node = tp->record("sum_cols", static_cast<std::size_t>(cols), {an},
                          [an, rows, cols](Tape& t, const double* g) {
                            double* ga = t.grad_acc(an);
                            for (int i = 0; i < rows; ++i)
                              for (int j = 0; j < cols; ++j)
                                ga[i * cols + j] += g[j];
                          });
  }
  return out;
}

// --- matrix products ---

namespace {

// c += a (m x k) * b (k x n)
void mm_nn_acc(double* c, const double* a, const double* b, int m, int k,
               int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c += a^T (a is k x m) * b (k x n)
void mm_tn_acc(double* c, const double* a, const double* b, int m, int k,
               int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * m;
    const double* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

// c += a (m x k) * b^T (b is n x k)
void mm_nt_acc(double* c, const double* a, const double* b, int m, int k,
               int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw DimensionError("matmul expects matrices");
  const int m = a.shape[0], k = a.shape[1];
  if (b.shape[0] != k) throw DimensionError("matmul: inner extents differ");
  const int n = b.shape[1];
  Tensor c = Tensor::zeros({m, n});
  mm_nn_acc(c.data(), a.data(), b.data(), m, k, n);
  Tape* tp = merge_tapes(tape_of(a), tape_of(b));
  if (tp) {
    int an = a.node, bn = b.node;
    auto as = a.store, bs = b.store;
    c.tape = tp;
    c.node = tp->record(
        "matmul", c.size(), {an, bn},
        [an, bn, as, bs, m, k, n](Tape& t, const double* g) {
          if (an >= 0) mm_nt_acc(t.grad_acc(an), g, bs->data(), m, n, k);
          if (bn >= 0) mm_tn_acc(t.grad_acc(bn), as->data(), g, k, m, n);
        });
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw DimensionError("matmul_tn expects matrices");
  const int k = a.shape[0], m = a.shape[1];
  if (b.shape[0] != k) throw DimensionError("matmul_tn: inner extents differ");
  const int n = b.shape[1];
  Tensor c = Tensor::zeros({m, n});
  mm_tn_acc(c.data(), a.data(), b.data(), m, k, n);
  Tape* tp = merge_tapes(tape_of(a), tape_of(b));
  if (tp) {
    int an = a.node, bn = b.node;
    auto as = a.store, bs = b.store;
    c.tape = tp;
    c.node = tp->record(
        "matmul_tn", c.size(), {an, bn},
        [an, bn, as, bs, m, k, n](Tape& t, const double* g) {
          // c = a^T b: da = b g^T (k x m), db = a g (k x n)
          if (an >= 0) mm_nt_acc(t.grad_acc(an), bs->data(), g, k, n, m);
          if (bn >= 0) mm_nn_acc(t.grad_acc(bn), as->data(), g, k, m, n);
        });
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw DimensionError("matmul_nt expects matrices");
  const int m = a.shape[0], k = a.shape[1];
  if (b.shape[1] != k) throw DimensionError("matmul_nt: inner extents differ");
  const int n = b.shape[0];
  Tensor c = Tensor::zeros({m, n});
  mm_nt_acc(c.data(), a.data(), b.data(), m, k, n);
  Tape* tp = merge_tapes(tape_of(a), tape_of(b));
  if (tp) {
    int an = a.node, bn = b.node;
    auto as = a.store, bs = b.store;
    c.tape = tp;
    c.node = tp->record(
        "matmul_nt", c.size(), {an, bn},
        [an, bn, as, bs, m, k, n](Tape& t, const double* g) {
          // c = a b^T: da = g b (m x k), db = g^T a (n x k)
          if (an >= 0) mm_nn_acc(t.grad_acc(an), g, bs->data(), m, n, k);
          if (bn >= 0) mm_tn_acc(t.grad_acc(bn), g, as->data(), n, m, k);
        });
  }
  return c;
}

// --- layer_norm ---

Tensor layer_norm(const Tensor& x, const std::vector<int>& axes, double eps) {
  const std::size_t rank = x.shape.size();
  if (axes.empty()) throw ContractError("layer_norm: axes must be nonempty");
  std::vector<bool> is_axis(rank, false);
  for (int a : axes) {
    if (a < 0 || static_cast<std::size_t>(a) >= rank)
      throw DimensionError("layer_norm: axis out of range");
    is_axis[static_cast<std::size_t>(a)] = true;
  }

  // Group id for each element: flattened coordinates over non-axis dims.
  const std::size_t n = x.size();
  std::size_t n_groups = 1;
  for (std::size_t d = 0; d < rank; ++d)
    if (!is_axis[d]) n_groups *= static_cast<std::size_t>(x.shape[d]);
  auto group_of = std::make_shared<std::vector<std::size_t>>(n);
  {
    std::vector<std::size_t> coord(rank, 0);
    for (std::size_t e = 0; e < n; ++e) {
      std::size_t gid = 0;
      for (std::size_t d = 0; d < rank; ++d)
        if (!is_axis[d])
          gid = gid * static_cast<std::size_t>(x.shape[d]) + coord[d];
      (*group_of)[e] = gid;
      for (std::size_t d = rank; d-- > 0;) {
        if (++coord[d] < static_cast<std::size_t>(x.shape[d])) break;
        coord[d] = 0;
      }
    }
  }

  std::vector<double> mean(n_groups, 0.0), var(n_groups, 0.0);
  std::vector<std::size_t> count(n_groups, 0);
  const double* xd = x.data();
  for (std::size_t e = 0; e < n; ++e) {
    mean[(*group_of)[e]] += xd[e];
    ++count[(*group_of)[e]];
  }
  for (std::size_t g = 0; g < n_groups; ++g) mean[g] /= static_cast<double>(count[g]);
  for (std::size_t e = 0; e < n; ++e) {
    double d = xd[e] - mean[(*group_of)[e]];
    var[(*group_of)[e]] += d * d;
  }
  auto inv_std = std::make_shared<std::vector<double>>(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g)
    (*inv_std)[g] = 1.0 / std::sqrt(var[g] / static_cast<double>(count[g]) + eps);

  Tensor y = Tensor::zeros(x.shape);
  double* yd = y.data();
  for (std::size_t e = 0; e < n; ++e)
    yd[e] = (xd[e] - mean[(*group_of)[e]]) * (*inv_std)[(*group_of)[e]];

  if (Tape* tp = tape_of(x)) {
    int xn = x.node;
    auto ys = y.store;
    auto counts = std::make_shared<std::vector<std::size_t>>(std::move(count));
    y.tape = tp;
    y.node = tp->record(
        "layer_norm", n, {xn},
        [xn, ys, group_of, inv_std, counts, n](Tape& t, const double* g) {
          const std::size_t n_groups = inv_std->size();
          std::vector<double> gbar(n_groups, 0.0), gy(n_groups, 0.0);
          const double* y = ys->data();
          for (std::size_t e = 0; e < n; ++e) {
            gbar[(*group_of)[e]] += g[e];
            gy[(*group_of)[e]] += g[e] * y[e];
          }
          for (std::size_t q = 0; q < n_groups; ++q) {
            gbar[q] /= static_cast<double>((*counts)[q]);
            gy[q] /= static_cast<double>((*counts)[q]);
          }
          double* gx = t.grad_acc(xn);
          for (std::size_t e = 0; e < n; ++e) {
            std::size_t q = (*group_of)[e];
            gx[e] += (*inv_std)[q] * (g[e] - gbar[q] - y[e] * gy[q]);
          }
        });
  }
  return y;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i]));
  return m;
}

double max_abs(const ComplexTensor& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < 2 * a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i]));
  return m;
}

}  // namespace nips
