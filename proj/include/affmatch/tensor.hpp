#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "affmatch/errors.hpp"

namespace affmatch {

// Reverse-mode automatic differentiation over 64-bit row-major matrices.
//
// A Tensor is a cheap handle onto a graph node. Forward values are computed
// eagerly when an op is applied; backward() walks the recorded graph in
// reverse topological order and accumulates gradients into every node that
// requires them. Graph traversal order is fixed by construction order, so two
// backward passes over identical graphs produce bitwise-equal gradients.

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // sized on demand, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(TensorNode&)> backprop;

  std::size_t size() const { return data.size(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

namespace detail {

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return filled(rows, cols, 0.0);
  }

  static Tensor filled(std::size_t rows, std::size_t cols, double value) {
    check_extents(rows, cols);
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->data.assign(rows * cols, value);
    return Tensor(std::move(n));
  }

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values) {
    check_extents(rows, cols);
    if (values.size() != rows * cols)
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not fill " + detail::shape_str(rows, cols));
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->data = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v) { return from(1, 1, {v}); }

  // A leaf that participates in gradient accumulation.
  static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> values) {
    Tensor t = from(rows, cols, std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  double at(std::size_t r, std::size_t c) const {
    return node_->data[r * node_->cols + c];
  }

  // Value of a 1x1 tensor.
  double value() const {
    if (size() != 1)
      throw ContractError("value(): tensor is " + detail::shape_str(rows(), cols()) +
                          ", expected [1x1]");
    return node_->data[0];
  }

  const std::vector<double>& data() const { return node_->data; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  // Mutable access for leaves (parameter updates between passes).
  std::vector<double>& mutable_data() { return node_->data; }
  std::vector<double>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  const NodePtr& node() const { return node_; }

  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

 private:
  static void check_extents(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0)
      throw ShapeError("tensor extents must be positive, got " + detail::shape_str(rows, cols));
  }

  NodePtr node_;
};

namespace detail {

inline Tensor make_op(std::size_t rows, std::size_t cols, std::vector<double> data,
                      std::vector<NodePtr> parents,
                      std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->data = std::move(data);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ: " +
                     detail::shape_str(a.rows(), a.cols()) + " vs " +
                     detail::shape_str(b.rows(), b.cols()));
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  std::vector<double> out(r * c, 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ad[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = &bd[kk * c];
      double* orow = &out[i * c];
      for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  NodePtr an = a.node(), bn = b.node();
  return detail::make_op(r, c, std::move(out), {an, bn}, [an, bn, r, k, c](TensorNode& self) {
    const auto& g = self.grad;
    if (an->requires_grad) {
      auto& ga = an->grad;
      const auto& bd = bn->data;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          const double* grow = &g[i * c];
          const double* brow = &bd[kk * c];
          for (std::size_t j = 0; j < c; ++j) acc += grow[j] * brow[j];
          ga[i * k + kk] += acc;
        }
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad;
      const auto& ad = an->data;
      for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t i = 0; i < r; ++i) {
          const double av = ad[i * k + kk];
          if (av == 0.0) continue;
          const double* grow = &g[i * c];
          double* gbrow = &gb[kk * c];
          for (std::size_t j = 0; j < c; ++j) gbrow[j] += av * grow[j];
        }
    }
  });
}

inline Tensor transpose(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.data()[i * c + j];
  NodePtr xn = x.node();
  return detail::make_op(c, r, std::move(out), {xn}, [xn, r, c](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += self.grad[j * r + i];
  });
}

// Row-wise softmax, stabilized by subtracting each row's max.
inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &x.data()[i * c];
    double m = row[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - m);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  NodePtr xn = x.node();
  return detail::make_op(r, c, std::move(out), {xn}, [xn, r, c](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = &self.data[i * c];
      const double* g = &self.grad[i * c];
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
      double* gx = &xn->grad[i * c];
      for (std::size_t j = 0; j < c; ++j) gx[j] += y[j] * (g[j] - dot);
    }
  });
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  NodePtr xn = x.node();
  return detail::make_op(x.rows(), x.cols(), std::move(out), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      const double y = self.data[i];
      xn->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

inline Tensor tanh_t(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x.data()[i]);
  NodePtr xn = x.node();
  return detail::make_op(x.rows(), x.cols(), std::move(out), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      const double y = self.data[i];
      xn->grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

// max(0, x); the subgradient at exactly 0 is 0.
inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  NodePtr xn = x.node();
  return detail::make_op(x.rows(), x.cols(), std::move(out), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i)
      if (xn->data[i] > 0.0) xn->grad[i] += self.grad[i];
  });
}

// Elementwise product. b may be a 1xC row, broadcast against every row of a;
// no other broadcasting is supported.
inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.rows(), c = a.cols();
  const bool row_bcast = (b.rows() == 1 && r > 1 && b.cols() == c);
  if (!row_bcast) detail::require_same_shape("hadamard", a, b);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = a.data()[i * c + j] * b.data()[(row_bcast ? 0 : i) * c + j];
  NodePtr an = a.node(), bn = b.node();
  return detail::make_op(r, c, std::move(out), {an, bn},
                         [an, bn, r, c, row_bcast](TensorNode& self) {
    const auto& g = self.grad;
    if (an->requires_grad)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          an->grad[i * c + j] += g[i * c + j] * bn->data[(row_bcast ? 0 : i) * c + j];
    if (bn->requires_grad) {
      if (row_bcast) {
        for (std::size_t j = 0; j < c; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < r; ++i) acc += g[i * c + j] * an->data[i * c + j];
          bn->grad[j] += acc;
        }
      } else {
        for (std::size_t i = 0; i < r * c; ++i) bn->grad[i] += g[i] * an->data[i];
      }
    }
  });
}

// Elementwise quotient of same-shape tensors.
inline Tensor divide(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("divide", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  NodePtr an = a.node(), bn = b.node();
  return detail::make_op(a.rows(), a.cols(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      const double g = self.grad[i];
      const double bv = bn->data[i];
      if (an->requires_grad) an->grad[i] += g / bv;
      if (bn->requires_grad) bn->grad[i] -= g * an->data[i] / (bv * bv);
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  NodePtr an = a.node(), bn = b.node();
  return detail::make_op(a.rows(), a.cols(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i];
      if (bn->requires_grad) bn->grad[i] += self.grad[i];
    }
  });
}

inline Tensor subtract(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("subtract", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  NodePtr an = a.node(), bn = b.node();
  return detail::make_op(a.rows(), a.cols(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i];
      if (bn->requires_grad) bn->grad[i] -= self.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double k) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] * k;
  NodePtr xn = x.node();
  return detail::make_op(x.rows(), x.cols(), std::move(out), {xn}, [xn, k](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i) xn->grad[i] += k * self.grad[i];
  });
}

inline Tensor add_scalar(const Tensor& x, double k) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] + k;
  NodePtr xn = x.node();
  return detail::make_op(x.rows(), x.cols(), std::move(out), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

// Euclidean norm of each row; result is Rx1. Zero rows get subgradient 0.
inline Tensor l2_norm_rows(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = x.data()[i * c + j];
      s += v * v;
    }
    out[i] = std::sqrt(s);
  }
  NodePtr xn = x.node();
  return detail::make_op(r, 1, std::move(out), {xn}, [xn, r, c](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < r; ++i) {
      const double y = self.data[i];
      if (y == 0.0) continue;
      const double g = self.grad[i] / y;
      for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += g * xn->data[i * c + j];
    }
  });
}

// Sum of all entries; result is 1x1.
inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  NodePtr xn = x.node();
  return detail::make_op(1, 1, {s}, {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < xn->data.size(); ++i) xn->grad[i] += g;
  });
}

// Squared Frobenius norm; result is 1x1.
inline Tensor frobenius_sq(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  NodePtr xn = x.node();
  return detail::make_op(1, 1, {s}, {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    const double g = 2.0 * self.grad[0];
    for (std::size_t i = 0; i < xn->data.size(); ++i) xn->grad[i] += g * xn->data[i];
  });
}

// Same data, new extents (row-major order preserved).
inline Tensor reshape(const Tensor& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.size())
    throw ShapeError("reshape: cannot view " + detail::shape_str(x.rows(), x.cols()) + " as " +
                     detail::shape_str(rows, cols));
  NodePtr xn = x.node();
  return detail::make_op(rows, cols, x.data(), {xn}, [xn](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

inline Tensor slice_rows(const Tensor& x, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > x.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " + std::to_string(x.rows()) +
                     " rows");
  const std::size_t c = x.cols();
  std::vector<double> out(x.data().begin() + first * c, x.data().begin() + (first + count) * c);
  NodePtr xn = x.node();
  return detail::make_op(count, c, std::move(out), {xn}, [xn, first, c](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < self.data.size(); ++i) xn->grad[first * c + i] += self.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& x, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > x.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " + std::to_string(x.cols()) +
                     " cols");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.data()[i * c + first + j];
  NodePtr xn = x.node();
  return detail::make_op(r, count, std::move(out), {xn},
                         [xn, first, r, c, count](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j)
        xn->grad[i * c + first + j] += self.grad[i * count + j];
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw EmptyInputError("concat_rows: no parts");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw ShapeError("concat_rows: column mismatch: " + detail::shape_str(p.rows(), p.cols()) +
                       " vs " + detail::shape_str(parts[0].rows(), c));
    r += p.rows();
  }
  std::vector<double> out;
  out.reserve(r * c);
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  auto nodes = parents;
  return detail::make_op(r, c, std::move(out), std::move(parents), [nodes](TensorNode& self) {
    std::size_t off = 0;
    for (const auto& p : nodes) {
      if (p->requires_grad)
        for (std::size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self.grad[off + i];
      off += p->data.size();
    }
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw EmptyInputError("concat_cols: no parts");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r)
      throw ShapeError("concat_cols: row mismatch: " + detail::shape_str(p.rows(), p.cols()) +
                       " vs " + detail::shape_str(r, parts[0].cols()));
    c += p.cols();
  }
  std::vector<double> out(r * c);
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j)
        out[i * c + off + j] = p.data()[i * p.cols() + j];
    off += p.cols();
    parents.push_back(p.node());
  }
  auto nodes = parents;
  return detail::make_op(r, c, std::move(out), std::move(parents), [nodes, r, c](TensorNode& self) {
    std::size_t off = 0;
    for (const auto& p : nodes) {
      const std::size_t pc = p->cols;
      if (p->requires_grad)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j)
            p->grad[i * pc + j] += self.grad[i * c + off + j];
      off += pc;
    }
  });
}

// Column-wise max over rows; result is 1xC. Gradient flows to the first
// row attaining each column's max, so pooling is deterministic under ties.
inline Tensor colwise_max(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(c);
  auto argmax = std::make_shared<std::vector<std::size_t>>(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = x.data()[j];
    std::size_t bi = 0;
    for (std::size_t i = 1; i < r; ++i) {
      const double v = x.data()[i * c + j];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out[j] = best;
    (*argmax)[j] = bi;
  }
  NodePtr xn = x.node();
  return detail::make_op(1, c, std::move(out), {xn}, [xn, argmax, c](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (std::size_t j = 0; j < c; ++j) xn->grad[(*argmax)[j] * c + j] += self.grad[j];
  });
}

// a (RxC) plus row b (1xC) broadcast over a's rows.
inline Tensor add_row(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols())
    throw ShapeError("add_row: " + detail::shape_str(a.rows(), a.cols()) + " + " +
                     detail::shape_str(b.rows(), b.cols()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] + b.data()[j];
  NodePtr an = a.node(), bn = b.node();
  return detail::make_op(r, c, std::move(out), {an, bn}, [an, bn, r, c](TensorNode& self) {
    if (an->requires_grad)
      for (std::size_t i = 0; i < r * c; ++i) an->grad[i] += self.grad[i];
    if (bn->requires_grad)
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < r; ++i) acc += self.grad[i * c + j];
        bn->grad[j] += acc;
      }
  });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace detail {

// Post-order DFS; the returned list has parents before children, so iterating
// it in reverse visits each node before the nodes it feeds.
inline std::vector<TensorNode*> topo_order(TensorNode* root) {
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients accumulate, so zero them
// (zero_grads / ParamStore::zero_grads) before a fresh pass.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: root must be [1x1], got " +
                        detail::shape_str(loss.rows(), loss.cols()));
  TensorNode* root = loss.node().get();
  if (!root->requires_grad) return;
  auto order = detail::topo_order(root);
  for (TensorNode* n : order)
    n->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// Zero the gradient of every grad-requiring node reachable from root.
inline void zero_grads(const Tensor& root) {
  if (!root.node()->requires_grad) return;
  for (TensorNode* n : detail::topo_order(root.node().get()))
    n->grad.assign(n->data.size(), 0.0);
}

}  // namespace affmatch
