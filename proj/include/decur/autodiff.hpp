#ifndef DECUR_AUTODIFF_HPP
#define DECUR_AUTODIFF_HPP

// Tape-based reverse-mode differentiation over dense rank-2 tensors.
//
// A Graph owns every node created while evaluating an expression. Nodes are
// appended after their inputs, so the tape order is already topological and
// backward is a single reverse sweep.

#include "decur/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace decur {

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scalar_mul,
  add_scalar,
  relu,
  mean_axis,
  sum,
  square,
  sqrt,
  div,
  batch_standardize,
  slice,
  transpose,
  diag,
  add_row,
  mul_row,
};

inline const char *op_name(OpKind k) {
  switch (k) {
  case OpKind::leaf: return "leaf";
  case OpKind::matmul: return "matmul";
  case OpKind::add: return "add";
  case OpKind::sub: return "sub";
  case OpKind::mul: return "mul";
  case OpKind::scalar_mul: return "scalar_mul";
  case OpKind::add_scalar: return "add_scalar";
  case OpKind::relu: return "relu";
  case OpKind::mean_axis: return "mean_axis";
  case OpKind::sum: return "sum";
  case OpKind::square: return "square";
  case OpKind::sqrt: return "sqrt";
  case OpKind::div: return "div";
  case OpKind::batch_standardize: return "batch_standardize";
  case OpKind::slice: return "slice";
  case OpKind::transpose: return "transpose";
  case OpKind::diag: return "diag";
  case OpKind::add_row: return "add_row";
  case OpKind::mul_row: return "mul_row";
  }
  return "?";
}

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph *graph = nullptr;
  std::size_t id = 0;

  const Tensor &value() const;
  const Shape &shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_mat(const Tensor &t) {
  return ConstMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
inline MutMap as_mat(Tensor &t) {
  return MutMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
} // namespace detail

class Graph {
public:
  using BackwardFn = std::function<void(Graph &, std::size_t self)>;

  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad; // empty until backward touches it
    bool requires_grad = false;
    BackwardFn backward;
  };

  Graph() = default;
  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;
  Graph(Graph &&) = default;
  Graph &operator=(Graph &&) = default;

  Var leaf(Tensor value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn bwd) {
    Node n;
    n.kind = kind;
    for (auto i : inputs)
      n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    if (n.requires_grad)
      n.backward = std::move(bwd);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Node &node(std::size_t id) const { return nodes_.at(id); }
  const Tensor &value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulated into a node by the last backward; zeros if untouched.
  Tensor grad(Var v) const {
    const auto &n = nodes_.at(v.id);
    return n.grad.data.empty() ? Tensor(n.value.shape) : n.grad;
  }

  /// Mutable gradient buffer, lazily zero-initialised.
  Tensor &grad_buffer(std::size_t id) {
    auto &n = nodes_[id];
    if (n.grad.data.empty())
      n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  /// Reverse sweep from a scalar sink. Each node is visited once. Returns the
  /// gradient of every leaf that requires it, keyed by node id.
  std::map<std::size_t, Tensor> backward(Var sink) {
    if (sink.graph != this || sink.id >= nodes_.size())
      throw std::invalid_argument("backward: sink does not belong to this graph");
    if (!nodes_[sink.id].value.is_scalar())
      throw ShapeError("backward: sink must be scalar, got " +
                       shape_str(nodes_[sink.id].value.shape));
    for (auto &n : nodes_)
      n.grad = Tensor();
    grad_buffer(sink.id).data[0] = 1.0;
    for (std::size_t k = sink.id + 1; k-- > 0;) {
      auto &n = nodes_[k];
      if (!n.requires_grad || n.grad.data.empty() || !n.backward)
        continue;
      n.backward(*this, k);
    }
    std::map<std::size_t, Tensor> out;
    for (std::size_t k = 0; k < nodes_.size(); ++k)
      if (nodes_[k].kind == OpKind::leaf && nodes_[k].requires_grad)
        out.emplace(k, grad(Var{this, k}));
    return out;
  }

  // ReLU activation-pattern bookkeeping, used by finite-difference checks to
  // detect when a perturbation crosses a kink.
  void note_relu_pattern(const Tensor &input) {
    for (double v : input.data) {
      const std::uint64_t bit = v > 0.0 ? 1u : (v == 0.0 ? 2u : 3u);
      relu_hash_ = (relu_hash_ ^ bit) * 1099511628211ull;
      if (v == 0.0)
        ++relu_exact_zeros_;
    }
  }
  std::uint64_t relu_pattern_hash() const { return relu_hash_; }
  std::size_t relu_exact_zeros() const { return relu_exact_zeros_; }

private:
  std::vector<Node> nodes_;
  std::uint64_t relu_hash_ = 14695981039346656037ull;
  std::size_t relu_exact_zeros_ = 0;
};

inline const Tensor &Var::value() const { return graph->value(*this); }

namespace detail {

inline Graph &same_graph(const char *op, Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr)
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
  return *a.graph;
}

inline void require_same_shape(const char *op, const Tensor &a, const Tensor &b) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

inline void require_matrix(const char *op, const Tensor &a) {
  if (!a.is_matrix())
    throw ShapeError(std::string(op) + ": expected rank-2 operand, got " + shape_str(a.shape));
}

inline void axpy(Tensor &dst, const Tensor &src, double alpha = 1.0) {
  for (std::size_t i = 0; i < dst.data.size(); ++i)
    dst.data[i] += alpha * src.data[i];
}

} // namespace detail

inline Var matmul(Var a, Var b) {
  auto &g = detail::same_graph("matmul", a, b);
  const auto &A = a.value();
  const auto &B = b.value();
  detail::require_matrix("matmul", A);
  detail::require_matrix("matmul", B);
  if (A.cols() != B.rows())
    throw ShapeError("matmul: inner dimensions differ " + shape_str(A.shape) + " x " +
                     shape_str(B.shape));
  Tensor out({A.rows(), B.cols()});
  detail::as_mat(out).noalias() = detail::as_mat(A) * detail::as_mat(B);
  return g.record(OpKind::matmul, {a.id, b.id}, std::move(out), [ia = a.id, ib = b.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    if (g.requires_grad(ia)) {
      auto &ga = g.grad_buffer(ia);
      detail::as_mat(ga).noalias() += detail::as_mat(G) * detail::as_mat(g.node(ib).value).transpose();
    }
    if (g.requires_grad(ib)) {
      auto &gb = g.grad_buffer(ib);
      detail::as_mat(gb).noalias() += detail::as_mat(g.node(ia).value).transpose() * detail::as_mat(G);
    }
  });
}

inline Var add(Var a, Var b) {
  auto &g = detail::same_graph("add", a, b);
  detail::require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  detail::axpy(out, b.value());
  return g.record(OpKind::add, {a.id, b.id}, std::move(out), [ia = a.id, ib = b.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    if (g.requires_grad(ia))
      detail::axpy(g.grad_buffer(ia), G);
    if (g.requires_grad(ib))
      detail::axpy(g.grad_buffer(ib), G);
  });
}

inline Var sub(Var a, Var b) {
  auto &g = detail::same_graph("sub", a, b);
  detail::require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  detail::axpy(out, b.value(), -1.0);
  return g.record(OpKind::sub, {a.id, b.id}, std::move(out), [ia = a.id, ib = b.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    if (g.requires_grad(ia))
      detail::axpy(g.grad_buffer(ia), G);
    if (g.requires_grad(ib))
      detail::axpy(g.grad_buffer(ib), G, -1.0);
  });
}

inline Var mul(Var a, Var b) {
  auto &g = detail::same_graph("mul", a, b);
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const auto &B = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] *= B.data[i];
  return g.record(OpKind::mul, {a.id, b.id}, std::move(out), [ia = a.id, ib = b.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    if (g.requires_grad(ia)) {
      auto &ga = g.grad_buffer(ia);
      const auto &B = g.node(ib).value;
      for (std::size_t i = 0; i < G.data.size(); ++i)
        ga.data[i] += G.data[i] * B.data[i];
    }
    if (g.requires_grad(ib)) {
      auto &gb = g.grad_buffer(ib);
      const auto &A = g.node(ia).value;
      for (std::size_t i = 0; i < G.data.size(); ++i)
        gb.data[i] += G.data[i] * A.data[i];
    }
  });
}

inline Var scalar_mul(Var a, double s) {
  Tensor out = a.value();
  for (auto &v : out.data)
    v *= s;
  return a.graph->record(OpKind::scalar_mul, {a.id}, std::move(out), [ia = a.id, s](Graph &g, std::size_t self) {
    detail::axpy(g.grad_buffer(ia), g.node(self).grad, s);
  });
}

inline Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (auto &v : out.data)
    v += s;
  return a.graph->record(OpKind::add_scalar, {a.id}, std::move(out), [ia = a.id](Graph &g, std::size_t self) {
    detail::axpy(g.grad_buffer(ia), g.node(self).grad);
  });
}

/// max(x, 0); the derivative at exactly 0 is taken as 0.
inline Var relu(Var a) {
  a.graph->note_relu_pattern(a.value());
  Tensor out = a.value();
  for (auto &v : out.data)
    v = v > 0.0 ? v : 0.0;
  return a.graph->record(OpKind::relu, {a.id}, std::move(out), [ia = a.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    const auto &X = g.node(ia).value;
    auto &ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < G.data.size(); ++i)
      if (X.data[i] > 0.0)
        ga.data[i] += G.data[i];
  });
}

/// Mean of a rank-2 tensor along `axis` (0: over rows -> 1xC, 1: over cols -> Rx1).
inline Var mean_axis(Var a, int axis) {
  const auto &A = a.value();
  detail::require_matrix("mean_axis", A);
  if (axis != 0 && axis != 1)
    throw ShapeError("mean_axis: axis must be 0 or 1");
  const std::size_t R = A.rows(), C = A.cols();
  Tensor out = axis == 0 ? Tensor({1, C}) : Tensor({R, 1});
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j)
      out.data[axis == 0 ? j : i] += A(i, j);
  const double inv = 1.0 / static_cast<double>(axis == 0 ? R : C);
  for (auto &v : out.data)
    v *= inv;
  return a.graph->record(OpKind::mean_axis, {a.id}, std::move(out), [ia = a.id, axis, inv](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    auto &ga = g.grad_buffer(ia);
    const std::size_t C = ga.cols();
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < C; ++j)
        ga.data[i * C + j] += inv * G.data[axis == 0 ? j : i];
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data)
    s += v;
  return a.graph->record(OpKind::sum, {a.id}, Tensor::scalar(s), [ia = a.id](Graph &g, std::size_t self) {
    const double G = g.node(self).grad.data[0];
    for (auto &v : g.grad_buffer(ia).data)
      v += G;
  });
}

inline Var square(Var a) {
  Tensor out = a.value();
  for (auto &v : out.data)
    v *= v;
  return a.graph->record(OpKind::square, {a.id}, std::move(out), [ia = a.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    const auto &X = g.node(ia).value;
    auto &ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < G.data.size(); ++i)
      ga.data[i] += 2.0 * X.data[i] * G.data[i];
  });
}

inline Var sqrt(Var a) {
  Tensor out = a.value();
  for (auto &v : out.data) {
    if (v < 0.0)
      throw NumericDomainError("sqrt: negative operand " + std::to_string(v));
    v = std::sqrt(v);
  }
  return a.graph->record(OpKind::sqrt, {a.id}, std::move(out), [ia = a.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    const auto &Y = g.node(self).value;
    auto &ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < G.data.size(); ++i) {
      if (Y.data[i] == 0.0)
        throw NumericDomainError("sqrt: derivative undefined at 0");
      ga.data[i] += G.data[i] * 0.5 / Y.data[i];
    }
  });
}

/// Elementwise a / (b + eps). With eps == 0 a zero denominator is an error.
inline Var div(Var a, Var b, double eps = 0.0) {
  auto &g = detail::same_graph("div", a, b);
  detail::require_same_shape("div", a.value(), b.value());
  Tensor out = a.value();
  const auto &B = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double d = B.data[i] + eps;
    if (d == 0.0)
      throw NumericDomainError("div: zero denominator at flat index " + std::to_string(i));
    out.data[i] /= d;
  }
  return g.record(OpKind::div, {a.id, b.id}, std::move(out), [ia = a.id, ib = b.id, eps](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    const auto &A = g.node(ia).value;
    const auto &B = g.node(ib).value;
    if (g.requires_grad(ia)) {
      auto &ga = g.grad_buffer(ia);
      for (std::size_t i = 0; i < G.data.size(); ++i)
        ga.data[i] += G.data[i] / (B.data[i] + eps);
    }
    if (g.requires_grad(ib)) {
      auto &gb = g.grad_buffer(ib);
      for (std::size_t i = 0; i < G.data.size(); ++i) {
        const double d = B.data[i] + eps;
        gb.data[i] -= G.data[i] * A.data[i] / (d * d);
      }
    }
  });
}

/// Per-column (x - mean) / sqrt(var + eps) over the batch axis; var uses
/// denominator N. eps == 0 with a constant column is a domain error.
inline Var batch_standardize(Var a, double eps = 1e-5) {
  const auto &X = a.value();
  detail::require_matrix("batch_standardize", X);
  const std::size_t N = X.rows(), C = X.cols();
  Tensor out({N, C});
  std::vector<double> inv_std(C);
  for (std::size_t j = 0; j < C; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      m += X(i, j);
    m /= static_cast<double>(N);
    double v = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      v += (X(i, j) - m) * (X(i, j) - m);
    v /= static_cast<double>(N);
    if (v + eps <= 0.0)
      throw NumericDomainError("batch_standardize: zero variance in column " + std::to_string(j));
    inv_std[j] = 1.0 / std::sqrt(v + eps);
    for (std::size_t i = 0; i < N; ++i)
      out(i, j) = (X(i, j) - m) * inv_std[j];
  }
  return a.graph->record(OpKind::batch_standardize, {a.id}, std::move(out),
                         [ia = a.id, inv_std = std::move(inv_std)](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    const auto &Y = g.node(self).value;
    auto &ga = g.grad_buffer(ia);
    const std::size_t N = Y.rows(), C = Y.cols();
    const double invN = 1.0 / static_cast<double>(N);
    for (std::size_t j = 0; j < C; ++j) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        mg += G(i, j);
        mgy += G(i, j) * Y(i, j);
      }
      mg *= invN;
      mgy *= invN;
      for (std::size_t i = 0; i < N; ++i)
        ga(i, j) += inv_std[j] * (G(i, j) - mg - Y(i, j) * mgy);
    }
  });
}

/// Rows [r0, r1) and columns [c0, c1) of a rank-2 tensor.
inline Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  const auto &X = a.value();
  detail::require_matrix("slice", X);
  if (r0 >= r1 || c0 >= c1 || r1 > X.rows() || c1 > X.cols())
    throw ShapeError("slice: range [" + std::to_string(r0) + ":" + std::to_string(r1) + ", " +
                     std::to_string(c0) + ":" + std::to_string(c1) + "] invalid for " +
                     shape_str(X.shape));
  Tensor out({r1 - r0, c1 - c0});
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j)
      out(i - r0, j - c0) = X(i, j);
  return a.graph->record(OpKind::slice, {a.id}, std::move(out), [ia = a.id, r0, c0](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    auto &ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (std::size_t j = 0; j < G.cols(); ++j)
        ga(i + r0, j + c0) += G(i, j);
  });
}

inline Var transpose(Var a) {
  const auto &X = a.value();
  detail::require_matrix("transpose", X);
  Tensor out({X.cols(), X.rows()});
  detail::as_mat(out) = detail::as_mat(X).transpose();
  return a.graph->record(OpKind::transpose, {a.id}, std::move(out), [ia = a.id](Graph &g, std::size_t self) {
    detail::as_mat(g.grad_buffer(ia)) += detail::as_mat(g.node(self).grad).transpose();
  });
}

/// Main diagonal of a square matrix as a 1xK row.
inline Var diag(Var a) {
  const auto &X = a.value();
  detail::require_matrix("diag", X);
  if (X.rows() != X.cols())
    throw ShapeError("diag: expected square matrix, got " + shape_str(X.shape));
  const std::size_t K = X.rows();
  Tensor out({1, K});
  for (std::size_t i = 0; i < K; ++i)
    out.data[i] = X(i, i);
  return a.graph->record(OpKind::diag, {a.id}, std::move(out), [ia = a.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    auto &ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < G.data.size(); ++i)
      ga(i, i) += G.data[i];
  });
}

namespace detail {
inline void require_row_for(const char *op, const Tensor &X, const Tensor &r) {
  require_matrix(op, X);
  if (r.numel() != X.cols())
    throw ShapeError(std::string(op) + ": row " + shape_str(r.shape) + " does not match " +
                     shape_str(X.shape));
}
} // namespace detail

/// X + r with a 1xC row added to every row of an NxC matrix (bias add).
inline Var add_row(Var x, Var r) {
  auto &g = detail::same_graph("add_row", x, r);
  detail::require_row_for("add_row", x.value(), r.value());
  Tensor out = x.value();
  const auto &R = r.value();
  const std::size_t C = out.cols();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < C; ++j)
      out.data[i * C + j] += R.data[j];
  return g.record(OpKind::add_row, {x.id, r.id}, std::move(out), [ix = x.id, ir = r.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    const std::size_t C = G.cols();
    if (g.requires_grad(ix))
      detail::axpy(g.grad_buffer(ix), G);
    if (g.requires_grad(ir)) {
      auto &gr = g.grad_buffer(ir);
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < C; ++j)
          gr.data[j] += G.data[i * C + j];
    }
  });
}

/// X * r with a 1xC row scaling every row of an NxC matrix columnwise.
inline Var mul_row(Var x, Var r) {
  auto &g = detail::same_graph("mul_row", x, r);
  detail::require_row_for("mul_row", x.value(), r.value());
  Tensor out = x.value();
  const auto &R = r.value();
  const std::size_t C = out.cols();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < C; ++j)
      out.data[i * C + j] *= R.data[j];
  return g.record(OpKind::mul_row, {x.id, r.id}, std::move(out), [ix = x.id, ir = r.id](Graph &g, std::size_t self) {
    const auto &G = g.node(self).grad;
    const std::size_t C = G.cols();
    if (g.requires_grad(ix)) {
      auto &gx = g.grad_buffer(ix);
      const auto &R = g.node(ir).value;
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < C; ++j)
          gx.data[i * C + j] += G.data[i * C + j] * R.data[j];
    }
    if (g.requires_grad(ir)) {
      auto &gr = g.grad_buffer(ir);
      const auto &X = g.node(ix).value;
      for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < C; ++j)
          gr.data[j] += G.data[i * C + j] * X.data[i * C + j];
    }
  });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scalar_mul(a, s); }

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct LeafCheck {
  double max_rel_error = 0.0; // infinity-norm relative error
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0; // coordinates whose perturbation crossed a ReLU kink
};

struct GradCheckReport {
  std::vector<LeafCheck> leaves;
  bool finite = true;
  bool passed = false;
  std::string message;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto &l : leaves)
      m = std::max(m, l.max_rel_error);
    return m;
  }
};

/// Builds a scalar expression from leaf handles inside the supplied graph.
using ExprBuilder = std::function<Var(Graph &, std::span<const Var>)>;

/// Compares analytic gradients with central differences for every coordinate
/// of every leaf. The per-leaf error is max|a - n| / max(max|a|, max|n|);
/// a leaf whose gradient is zero up to difference noise (a bias feeding batch
/// norm, say) has scale below kGradCheckZeroScale and reports max|a - n|.
/// Coordinates where x+h or x-h changes the ReLU activation pattern (including
/// points sitting exactly on a kink) are skipped and counted.
inline constexpr double kGradCheckZeroScale = 1e-7;

inline GradCheckReport grad_check(const ExprBuilder &build, const std::vector<Tensor> &leaves,
                                  double step = 1e-5, double tol = 1e-4) {
  if (!(step > 0.0))
    throw std::invalid_argument("grad_check: step must be positive");
  GradCheckReport report;

  auto evaluate = [&](const std::vector<Tensor> &vals, std::uint64_t *pattern,
                      std::vector<Tensor> *grads) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(vals.size());
    for (const auto &t : vals)
      vars.push_back(g.leaf(t, grads != nullptr));
    Var out = build(g, vars);
    if (!out.value().is_scalar())
      throw ShapeError("grad_check: expression is not scalar");
    if (pattern)
      *pattern = g.relu_pattern_hash();
    if (grads) {
      g.backward(out);
      for (auto v : vars)
        grads->push_back(g.grad(v));
    }
    return out.value().item();
  };

  std::uint64_t base_pattern = 0;
  std::vector<Tensor> analytic;
  evaluate(leaves, &base_pattern, &analytic);

  std::vector<Tensor> work = leaves;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    LeafCheck lc;
    Tensor numeric(leaves[l].shape);
    std::vector<bool> skip(leaves[l].numel(), false);
    for (std::size_t i = 0; i < leaves[l].numel(); ++i) {
      const double x0 = leaves[l].data[i];
      std::uint64_t pp = 0, pm = 0;
      work[l].data[i] = x0 + step;
      const double fp = evaluate(work, &pp, nullptr);
      work[l].data[i] = x0 - step;
      const double fm = evaluate(work, &pm, nullptr);
      work[l].data[i] = x0;
      if (pp != base_pattern || pm != base_pattern) {
        skip[i] = true;
        ++lc.skipped;
        continue;
      }
      numeric.data[i] = (fp - fm) / (2.0 * step);
    }
    double scale = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < numeric.numel(); ++i) {
      if (skip[i])
        continue;
      const double a = analytic[l].data[i], n = numeric.data[i];
      if (!std::isfinite(a) || !std::isfinite(n)) {
        report.finite = false;
        report.message = "non-finite gradient in leaf " + std::to_string(l) + " at index " +
                         std::to_string(i);
        continue;
      }
      scale = std::max({scale, std::abs(a), std::abs(n)});
      worst = std::max(worst, std::abs(a - n));
      ++lc.checked;
    }
    lc.max_abs_error = worst;
    lc.max_rel_error = scale > kGradCheckZeroScale ? worst / scale : worst;
    report.leaves.push_back(lc);
  }
  report.passed = report.finite && report.max_rel_error() < tol;
  if (report.message.empty())
    report.message = report.passed ? "ok" : "max relative error " + std::to_string(report.max_rel_error());
  return report;
}

} // namespace decur

#endif
