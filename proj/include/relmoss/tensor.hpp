// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense row-major f64 matrices with a reverse-mode tape.
//
// Every differentiable value lives on a Tape. Leaves wrap shared parameter
// tensors; gradients for leaves accumulate across backward() calls until
// zero_grad() is called. Intermediate gradients are reset on each backward().

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace relmoss {

struct Tensor {
  std::vector<std::size_t> shape{0, 0};
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, values(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> vals)
      : shape{rows, cols}, values(std::move(vals)) {
    if (values.size() != rows * cols) {
      throw std::invalid_argument("Tensor: value count does not match shape");
    }
  }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
  std::size_t size() const { return values.size(); }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols(), cols()};
  }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[' << rows() << 'x' << cols() << ']';
    return os.str();
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::size_t rows, std::size_t cols, double fill = 0.0) {
  return std::make_shared<Tensor>(rows, cols, fill);
}

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline MapC view(const Tensor& t) { return MapC(t.values.data(), t.rows(), t.cols()); }
inline MapC grad_view(const Tensor& t) { return MapC(t.grad.data(), t.rows(), t.cols()); }
inline Map grad_view(Tensor& t) { return Map(t.grad.data(), t.rows(), t.cols()); }

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                              " vs " + b.shape_str());
}

}  // namespace detail

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Parameter leaf: gradients accumulate into *t.
  Var leaf(TensorPtr t) {
    nodes_.push_back(Node{std::move(t), {}, nullptr, true});
    return Var{this, nodes_.size() - 1};
  }

  Var constant(Tensor t) {
    t.requires_grad = false;
    t.grad.clear();
    nodes_.push_back(Node{std::make_shared<Tensor>(std::move(t)), {}, nullptr, true});
    return Var{this, nodes_.size() - 1};
  }

  Var record(Tensor out, std::vector<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& v : inputs) {
      if (v.tape != this) throw std::invalid_argument("Tape: input recorded on another tape");
      needs = needs || tensor(v).requires_grad;
    }
    out.requires_grad = needs;
    nodes_.push_back(Node{std::make_shared<Tensor>(std::move(out)), std::move(inputs),
                          needs ? std::move(fn) : BackwardFn{}, false});
    return Var{this, nodes_.size() - 1};
  }

  Tensor& tensor(Var v) { return *nodes_.at(v.id).value; }
  const Tensor& tensor(Var v) const { return *nodes_.at(v.id).value; }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss not on this tape");
    Tensor& l = tensor(loss);
    if (l.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " + l.shape_str());
    }
    for (Node& n : nodes_) {
      if (!n.is_leaf && n.value->requires_grad) {
        n.value->ensure_grad();
        n.value->zero_grad();
      }
    }
    if (!l.requires_grad) return;
    l.ensure_grad();
    l.grad[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*n.value);
    }
  }

  // Accumulate g into the gradient of v (no-op for constants).
  void accumulate(Var v, std::span<const double> g) {
    Tensor& t = tensor(v);
    if (!t.requires_grad) return;
    t.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) t.grad[i] += g[i];
  }

  bool needs_grad(Var v) const { return tensor(v).requires_grad; }

 private:
  struct Node {
    TensorPtr value;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool is_leaf;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->tensor(*this); }

// ---------------------------------------------------------------------------
// Primitives

inline Var matmul(Var a, Var b) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) detail::shape_error("matmul", A, B);
  Tensor out(A.rows(), B.cols());
  if (out.size() > 0) {
    detail::Map(out.values.data(), out.rows(), out.cols()).noalias() =
        detail::view(A) * detail::view(B);
  }
  return tp.record(std::move(out), {a, b}, [&tp, a, b](const Tensor& o) {
    const auto g = detail::grad_view(o);
    if (tp.needs_grad(a)) {
      Tensor& A = tp.tensor(a);
      A.ensure_grad();
      if (A.size() > 0) detail::grad_view(A).noalias() += g * detail::view(tp.tensor(b)).transpose();
    }
    if (tp.needs_grad(b)) {
      Tensor& B = tp.tensor(b);
      B.ensure_grad();
      if (B.size() > 0) detail::grad_view(B).noalias() += detail::view(tp.tensor(a)).transpose() * g;
    }
  });
}

inline Var add(Var a, Var b) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols()) detail::shape_error("add", A, B);
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = A.values[i] + B.values[i];
  return tp.record(std::move(out), {a, b}, [&tp, a, b](const Tensor& o) {
    tp.accumulate(a, o.grad);
    tp.accumulate(b, o.grad);
  });
}

inline Var sub(Var a, Var b) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols()) detail::shape_error("sub", A, B);
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = A.values[i] - B.values[i];
  return tp.record(std::move(out), {a, b}, [&tp, a, b](const Tensor& o) {
    tp.accumulate(a, o.grad);
    if (tp.needs_grad(b)) {
      std::vector<double> neg(o.grad.size());
      for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -o.grad[i];
      tp.accumulate(b, neg);
    }
  });
}

// Row vector bias b (1 x m) added to every row of a (n x m).
inline Var add_bias(Var a, Var b) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (B.rows() != 1 || B.cols() != A.cols()) detail::shape_error("add_bias", A, B);
  Tensor out(A.rows(), A.cols());
  const std::size_t m = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < m; ++c) out.values[r * m + c] = A.values[r * m + c] + B.values[c];
  return tp.record(std::move(out), {a, b}, [&tp, a, b](const Tensor& o) {
    tp.accumulate(a, o.grad);
    if (tp.needs_grad(b)) {
      const std::size_t m = o.cols();
      std::vector<double> g(m, 0.0);
      for (std::size_t r = 0; r < o.rows(); ++r)
        for (std::size_t c = 0; c < m; ++c) g[c] += o.grad[r * m + c];
      tp.accumulate(b, g);
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols()) detail::shape_error("mul", A, B);
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = A.values[i] * B.values[i];
  return tp.record(std::move(out), {a, b}, [&tp, a, b](const Tensor& o) {
    const Tensor& A = tp.tensor(a);
    const Tensor& B = tp.tensor(b);
    std::vector<double> g(o.size());
    if (tp.needs_grad(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * B.values[i];
      tp.accumulate(a, g);
    }
    if (tp.needs_grad(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * A.values[i];
      tp.accumulate(b, g);
    }
  });
}

inline Var scale(Var a, double s) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = A.values[i] * s;
  return tp.record(std::move(out), {a}, [&tp, a, s](const Tensor& o) {
    std::vector<double> g(o.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * s;
    tp.accumulate(a, g);
  });
}

// Concatenate along the last axis; all parts need the same row count.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape& tp = *parts.front().tape;
  const std::size_t n = parts.front().rows();
  std::size_t width = 0;
  for (const Var& p : parts) {
    if (p.rows() != n) detail::shape_error("concat", parts.front().value(), p.value());
    width += p.cols();
  }
  Tensor out(n, width);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    const std::size_t w = P.cols();
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(P.values.data() + r * w, w, out.values.data() + r * width + off);
    off += w;
  }
  return tp.record(std::move(out), parts, [&tp, parts](const Tensor& o) {
    const std::size_t n = o.rows();
    const std::size_t width = o.cols();
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t w = tp.tensor(p).cols();
      if (tp.needs_grad(p)) {
        std::vector<double> g(n * w);
        for (std::size_t r = 0; r < n; ++r)
          std::copy_n(o.grad.data() + r * width + off, w, g.data() + r * w);
        tp.accumulate(p, g);
      }
      off += w;
    }
  });
}

// Stack along rows; all parts need the same column count.
inline Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: no inputs");
  Tape& tp = *parts.front().tape;
  const std::size_t m = parts.front().cols();
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.cols() != m) detail::shape_error("vstack", parts.front().value(), p.value());
    n += p.rows();
  }
  Tensor out(n, m);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    std::copy(P.values.begin(), P.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(off));
    off += P.size();
  }
  return tp.record(std::move(out), parts, [&tp, parts](const Tensor& o) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t sz = tp.tensor(p).size();
      tp.accumulate(p, std::span<const double>(o.grad.data() + off, sz));
      off += sz;
    }
  });
}

// Mean over rows: (n x m) -> (1 x m).
inline Var row_mean(Var a) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  if (A.rows() == 0) throw std::invalid_argument("row_mean: empty input " + A.shape_str());
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out(1, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.values[c] += A.values[r * m + c];
  for (double& v : out.values) v /= static_cast<double>(n);
  return tp.record(std::move(out), {a}, [&tp, a, n, m](const Tensor& o) {
    std::vector<double> g(n * m);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) g[r * m + c] = o.grad[c] / static_cast<double>(n);
    tp.accumulate(a, g);
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// With `open_interval` the output is clamped to the representable open
// interval (0, 1), so saturated inputs never produce exactly 0 or 1.
inline Var sigmoid(Var a, bool open_interval = false) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = sigmoid_scalar(A.values[i]);
  if (open_interval) {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    for (double& v : out.values) v = std::clamp(v, lo, hi);
  }
  return tp.record(std::move(out), {a}, [&tp, a](const Tensor& o) {
    std::vector<double> g(o.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = o.values[i];
      g[i] = o.grad[i] * s * (1.0 - s);
    }
    tp.accumulate(a, g);
  });
}

inline Var relu(Var a) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = A.values[i] > 0.0 ? A.values[i] : 0.0;
  return tp.record(std::move(out), {a}, [&tp, a](const Tensor& o) {
    const Tensor& A = tp.tensor(a);
    std::vector<double> g(o.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = A.values[i] > 0.0 ? o.grad[i] : 0.0;
    tp.accumulate(a, g);
  });
}

inline Var sum(Var a) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  Tensor out(1, 1);
  out.values[0] = std::accumulate(A.values.begin(), A.values.end(), 0.0);
  return tp.record(std::move(out), {a}, [&tp, a](const Tensor& o) {
    std::vector<double> g(tp.tensor(a).size(), o.grad[0]);
    tp.accumulate(a, g);
  });
}

// Per-row inner product: (n x m), (n x m) -> (n x 1).
inline Var rowdot(Var a, Var b) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols()) detail::shape_error("rowdot", A, B);
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += A.values[r * m + c] * B.values[r * m + c];
    out.values[r] = s;
  }
  return tp.record(std::move(out), {a, b}, [&tp, a, b, n, m](const Tensor& o) {
    const Tensor& A = tp.tensor(a);
    const Tensor& B = tp.tensor(b);
    std::vector<double> g(n * m);
    if (tp.needs_grad(a)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[r * m + c] = o.grad[r] * B.values[r * m + c];
      tp.accumulate(a, g);
    }
    if (tp.needs_grad(b)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[r * m + c] = o.grad[r] * A.values[r * m + c];
      tp.accumulate(b, g);
    }
  });
}

// Scale each row of a (n x m) by the matching entry of c (n x 1).
inline Var mul_col(Var a, Var c) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const Tensor& C = c.value();
  if (C.rows() != A.rows() || C.cols() != 1) detail::shape_error("mul_col", A, C);
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out(n, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < m; ++k) out.values[r * m + k] = A.values[r * m + k] * C.values[r];
  return tp.record(std::move(out), {a, c}, [&tp, a, c, n, m](const Tensor& o) {
    const Tensor& A = tp.tensor(a);
    const Tensor& C = tp.tensor(c);
    if (tp.needs_grad(a)) {
      std::vector<double> g(n * m);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < m; ++k) g[r * m + k] = o.grad[r * m + k] * C.values[r];
      tp.accumulate(a, g);
    }
    if (tp.needs_grad(c)) {
      std::vector<double> g(n, 0.0);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < m; ++k) g[r] += o.grad[r * m + k] * A.values[r * m + k];
      tp.accumulate(c, g);
    }
  });
}

// out[i] = a[idx[i]]; backward scatter-adds.
inline Var gather_rows(Var a, std::vector<std::size_t> idx) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  const std::size_t m = A.cols();
  Tensor out(idx.size(), m);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= A.rows()) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(A.values.data() + idx[i] * m, m, out.values.data() + i * m);
  }
  return tp.record(std::move(out), {a}, [&tp, a, idx = std::move(idx), m](const Tensor& o) {
    Tensor& A = tp.tensor(a);
    A.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < m; ++c) A.grad[idx[i] * m + c] += o.grad[i * m + c];
  });
}

// Rows [begin, begin + count).
inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  if (begin + count > A.rows()) throw std::out_of_range("slice_rows: range exceeds " + A.shape_str());
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return gather_rows(a, std::move(idx));
}

// Sparse mean aggregation. Target row t averages rows
// indices[offsets[t] .. offsets[t+1]) of a; an empty segment yields zeros.
inline Var segment_mean(Var a, std::vector<std::size_t> offsets, std::vector<std::size_t> indices) {
  Tape& tp = *a.tape;
  const Tensor& A = a.value();
  if (offsets.empty() || offsets.back() != indices.size()) {
    throw std::invalid_argument("segment_mean: offsets do not cover indices");
  }
  const std::size_t n = offsets.size() - 1, m = A.cols();
  Tensor out(n, m);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = offsets[t], hi = offsets[t + 1];
    if (lo == hi) continue;
    double* dst = out.values.data() + t * m;
    for (std::size_t k = lo; k < hi; ++k) {
      if (indices[k] >= A.rows()) throw std::out_of_range("segment_mean: index out of range");
      const double* src = A.values.data() + indices[k] * m;
      for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t c = 0; c < m; ++c) dst[c] *= inv;
  }
  return tp.record(std::move(out), {a},
                   [&tp, a, offsets = std::move(offsets), indices = std::move(indices), m](const Tensor& o) {
                     Tensor& A = tp.tensor(a);
                     A.ensure_grad();
                     for (std::size_t t = 0; t + 1 < offsets.size(); ++t) {
                       const std::size_t lo = offsets[t], hi = offsets[t + 1];
                       if (lo == hi) continue;
                       const double inv = 1.0 / static_cast<double>(hi - lo);
                       const double* g = o.grad.data() + t * m;
                       for (std::size_t k = lo; k < hi; ++k) {
                         double* dst = A.grad.data() + indices[k] * m;
                         for (std::size_t c = 0; c < m; ++c) dst[c] += g[c] * inv;
                       }
                     }
                   });
}

enum class Reduction { Mean, Sum };

// Fused sigmoid + binary cross-entropy in log-sum-exp form.
inline Var bce_with_logits(Var logits, Var targets, Reduction red = Reduction::Mean) {
  Tape& tp = *logits.tape;
  const Tensor& Z = logits.value();
  const Tensor& Y = targets.value();
  if (Z.rows() != Y.rows() || Z.cols() != Y.cols()) detail::shape_error("bce_with_logits", Z, Y);
  const std::size_t n = Z.size();
  if (n == 0) throw std::invalid_argument("bce_with_logits: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = Z.values[i], y = Y.values[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  const double norm = red == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
  Tensor out(1, 1);
  out.values[0] = total * norm;
  return tp.record(std::move(out), {logits, targets}, [&tp, logits, targets, norm](const Tensor& o) {
    const Tensor& Z = tp.tensor(logits);
    const Tensor& Y = tp.tensor(targets);
    const double g0 = o.grad[0] * norm;
    std::vector<double> g(Z.size());
    if (tp.needs_grad(logits)) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = g0 * (sigmoid_scalar(Z.values[i]) - Y.values[i]);
      tp.accumulate(logits, g);
    }
    if (tp.needs_grad(targets)) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = -g0 * Z.values[i];
      tp.accumulate(targets, g);
    }
  });
}

// Mean squared error over all elements.
inline Var mse(Var pred, Var target) {
  Tape& tp = *pred.tape;
  const Tensor& P = pred.value();
  const Tensor& T = target.value();
  if (P.rows() != T.rows() || P.cols() != T.cols()) detail::shape_error("mse", P, T);
  const std::size_t n = P.size();
  if (n == 0) throw std::invalid_argument("mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = P.values[i] - T.values[i];
    total += d * d;
  }
  Tensor out(1, 1);
  out.values[0] = total / static_cast<double>(n);
  return tp.record(std::move(out), {pred, target}, [&tp, pred, target, n](const Tensor& o) {
    const Tensor& P = tp.tensor(pred);
    const Tensor& T = tp.tensor(target);
    const double k = 2.0 * o.grad[0] / static_cast<double>(n);
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = k * (P.values[i] - T.values[i]);
    tp.accumulate(pred, g);
    if (tp.needs_grad(target)) {
      for (double& v : g) v = -v;
      tp.accumulate(target, g);
    }
  });
}

// Value copy with no gradient path.
inline Var detach(Var a) { return a.tape->constant(Tensor(a.rows(), a.cols(), a.value().values)); }

}  // namespace relmoss
