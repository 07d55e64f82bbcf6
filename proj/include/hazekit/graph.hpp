#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hazekit/tensor.hpp"

namespace hazekit {

/// Define-by-run reverse-mode differentiation tape over Tensor values.
///
/// Values are computed eagerly as the expression is built; backward() walks
/// the tape once in reverse and accumulates gradients into zero-initialized
/// buffers. A graph is single use: it is rebuilt every iteration and a second
/// backward() call without rebuilding is rejected.
class Graph {
 public:
  struct Var {
    int id = -1;
  };

  /// Differentiable leaf bound to caller storage; backward() writes the
  /// accumulated gradient into `t.grad`.
  Var leaf(Tensor& t) {
    check_tensor(t, "leaf");
    for (const auto& [ptr, id] : bound_) {
      if (ptr == &t) {
        throw std::invalid_argument(
            "leaf: tensor already registered with this graph (node " +
            std::to_string(id) + ")");
      }
    }
    Node n;
    n.op = Op::Leaf;
    n.val = t;
    n.needs_grad = true;
    Var v = push(std::move(n));
    bound_.emplace_back(&t, v.id);
    t.node = v.id;
    return v;
  }

  /// Non-differentiable value.
  Var constant(Tensor t) {
    check_tensor(t, "constant");
    Node n;
    n.op = Op::Const;
    n.val = std::move(t);
    n.needs_grad = false;
    return push(std::move(n));
  }

  const Tensor& val(Var v) const { return node_at(v, "val").val; }

  /// Gradient buffer of a node, valid after backward(). Leaves always carry
  /// one (zeros when unreachable from the loss).
  const std::vector<double>& grad(Var v) const {
    const Node& n = node_at(v, "grad");
    if (!backward_done_) {
      throw std::logic_error("grad: backward() has not run on this graph");
    }
    if (grads_[v.id].empty() && n.op != Op::Leaf) {
      throw std::logic_error("grad: node " + std::to_string(v.id) +
                             " has no recorded gradient");
    }
    return grads_[v.id];
  }

  // ---- primitives ----------------------------------------------------

  Var add(Var a, Var b) { return binary_same_shape(Op::Add, a, b, "add"); }
  Var sub(Var a, Var b) { return binary_same_shape(Op::Sub, a, b, "sub"); }
  Var mul(Var a, Var b) { return binary_same_shape(Op::Mul, a, b, "mul"); }

  Var matmul(Var a, Var b) {
    const Tensor& ta = node_at(a, "matmul").val;
    const Tensor& tb = node_at(b, "matmul").val;
    if (ta.shape.size() != 2 || tb.shape.size() != 2 ||
        ta.shape[1] != tb.shape[0]) {
      throw std::invalid_argument("matmul: shapes " + shape_str(ta.shape) +
                                  " and " + shape_str(tb.shape) +
                                  " do not conform");
    }
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double* orow = &out.data[i * n];
      const double* arow = &ta.data[i * k];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = &tb.data[kk * n];
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
    return op_node(Op::MatMul, a, b, std::move(out));
  }

  Var neg(Var a) {
    return map_node(Op::Neg, a, [](double x) { return -x; });
  }

  Var exp(Var a) {
    return map_node(Op::Exp, a, [](double x) { return std::exp(x); });
  }

  Var log(Var a) {
    const Tensor& ta = node_at(a, "log").val;
    for (double x : ta.data) {
      if (!(x > 0.0)) {
        throw std::domain_error("log: non-positive input " +
                                std::to_string(x));
      }
    }
    return map_node(Op::Log, a, [](double x) { return std::log(x); });
  }

  Var square(Var a) {
    return map_node(Op::Square, a, [](double x) { return x * x; });
  }

  Var sum(Var a) {
    const Tensor& ta = node_at(a, "sum").val;
    double s = 0.0;
    for (double x : ta.data) s += x;
    return op_node(Op::Sum, a, Var{}, Tensor::scalar(s));
  }

  Var mean(Var a) {
    const Tensor& ta = node_at(a, "mean").val;
    double s = 0.0;
    for (double x : ta.data) s += x;
    return op_node(Op::Mean, a, Var{},
                   Tensor::scalar(s / static_cast<double>(ta.size())));
  }

  Var leaky_relu(Var a, double slope = 0.2) {
    Var v = map_node(Op::LeakyRelu, a,
                     [slope](double x) { return x > 0.0 ? x : slope * x; });
    nodes_[v.id].p0 = slope;
    return v;
  }

  Var tanh(Var a) {
    return map_node(Op::Tanh, a, [](double x) { return std::tanh(x); });
  }

  Var sigmoid(Var a) {
    return map_node(Op::Sigmoid, a, [](double x) {
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      const double e = std::exp(x);
      return e / (1.0 + e);
    });
  }

  /// D[i][j] = squared Euclidean distance between row i of `a` and row j of
  /// `b`; both operands are point sets with one point per row.
  Var pairwise_sqdist(Var a, Var b) {
    const Tensor& ta = node_at(a, "pairwise_sqdist").val;
    const Tensor& tb = node_at(b, "pairwise_sqdist").val;
    if (ta.shape.size() != 2 || tb.shape.size() != 2 ||
        ta.shape[1] != tb.shape[1]) {
      throw std::invalid_argument("pairwise_sqdist: shapes " +
                                  shape_str(ta.shape) + " and " +
                                  shape_str(tb.shape) + " do not conform");
    }
    const std::size_t m = ta.shape[0], n = tb.shape[0], L = ta.shape[1];
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
          const double d = ta.data[i * L + l] - tb.data[j * L + l];
          s += d * d;
        }
        out.data[i * n + j] = s;
      }
    }
    return op_node(Op::PairwiseSqDist, a, b, std::move(out));
  }

  /// Adds a length-n vector to every row of an m-by-n matrix.
  Var broadcast_add(Var mat, Var vec) {
    const Tensor& tm = node_at(mat, "broadcast_add").val;
    const Tensor& tv = node_at(vec, "broadcast_add").val;
    if (tm.shape.size() != 2 || tv.shape.size() != 1 ||
        tm.shape[1] != tv.shape[0]) {
      throw std::invalid_argument("broadcast_add: shapes " +
                                  shape_str(tm.shape) + " and " +
                                  shape_str(tv.shape) + " do not conform");
    }
    const std::size_t m = tm.shape[0], n = tm.shape[1];
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out.data[i * n + j] = tm.data[i * n + j] + tv.data[j];
      }
    }
    return op_node(Op::BroadcastAdd, mat, vec, std::move(out));
  }

  /// Multiplication by a fixed scalar.
  Var scale(Var a, double c) {
    Var v = map_node(Op::Scale, a, [c](double x) { return c * x; });
    nodes_[v.id].p0 = c;
    return v;
  }

  /// Stacks two matrices with equal column counts, rows of `a` first.
  Var concat_rows(Var a, Var b) {
    const Tensor& ta = node_at(a, "concat_rows").val;
    const Tensor& tb = node_at(b, "concat_rows").val;
    if (ta.shape.size() != 2 || tb.shape.size() != 2 ||
        ta.shape[1] != tb.shape[1]) {
      throw std::invalid_argument("concat_rows: shapes " +
                                  shape_str(ta.shape) + " and " +
                                  shape_str(tb.shape) + " do not conform");
    }
    Tensor out(Shape{ta.shape[0] + tb.shape[0], ta.shape[1]});
    std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
    std::copy(tb.data.begin(), tb.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(ta.size()));
    return op_node(Op::ConcatRows, a, b, std::move(out));
  }

  /// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
  Var clamp(Var a, double lo, double hi) {
    if (!(lo < hi)) {
      throw std::invalid_argument("clamp: empty interval [" +
                                  std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]");
    }
    Var v = map_node(Op::Clamp, a, [lo, hi](double x) {
      return std::min(std::max(x, lo), hi);
    });
    nodes_[v.id].p0 = lo;
    nodes_[v.id].p1 = hi;
    return v;
  }

  // ---- differentiation -----------------------------------------------

  void backward(Var loss) {
    const Node& ln = node_at(loss, "backward");
    if (backward_done_) {
      throw std::logic_error(
          "backward: graph already differentiated; rebuild the graph before "
          "calling backward again");
    }
    if (ln.val.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_str(ln.val.shape));
    }
    grads_.assign(nodes_.size(), {});
    grads_[loss.id].assign(1, 1.0);

    for (int i = loss.id; i >= 0; --i) {
      const Node& n = nodes_[i];
      if (grads_[i].empty() || !n.needs_grad) continue;
      scatter(i);
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op != Op::Leaf) continue;
      if (grads_[i].empty()) grads_[i].assign(nodes_[i].val.size(), 0.0);
    }
    for (const auto& [ptr, id] : bound_) {
      ptr->grad = grads_[id];
    }
    backward_done_ = true;
  }

  bool backward_done() const { return backward_done_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    MatMul,
    Neg,
    Exp,
    Log,
    Square,
    Sum,
    Mean,
    LeakyRelu,
    Tanh,
    Sigmoid,
    PairwiseSqDist,
    BroadcastAdd,
    Scale,
    ConcatRows,
    Clamp,
  };

  struct Node {
    Op op = Op::Const;
    int a = -1;
    int b = -1;
    double p0 = 0.0;
    double p1 = 0.0;
    Tensor val;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::pair<Tensor*, int>> bound_;
  bool backward_done_ = false;

  static void check_tensor(const Tensor& t, const char* what) {
    if (t.data.size() != shape_numel(t.shape)) {
      throw std::invalid_argument(std::string(what) + ": data length " +
                                  std::to_string(t.data.size()) +
                                  " does not match shape " +
                                  shape_str(t.shape));
    }
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Node& node_at(Var v, const char* what) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument(std::string(what) +
                                  ": variable does not belong to this graph");
    }
    return nodes_[v.id];
  }

  Var op_node(Op op, Var a, Var b, Tensor out) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = (a.id >= 0 && nodes_[a.id].needs_grad) ||
                   (b.id >= 0 && nodes_[b.id].needs_grad);
    n.val = std::move(out);
    return push(std::move(n));
  }

  template <typename F>
  Var map_node(Op op, Var a, F&& f) {
    const Tensor& ta = node_at(a, "op").val;
    Tensor out(ta.shape);
    for (std::size_t i = 0; i < ta.size(); ++i) out.data[i] = f(ta.data[i]);
    return op_node(op, a, Var{}, std::move(out));
  }

  Var binary_same_shape(Op op, Var a, Var b, const char* what) {
    const Tensor& ta = node_at(a, what).val;
    const Tensor& tb = node_at(b, what).val;
    if (ta.shape != tb.shape) {
      throw std::invalid_argument(std::string(what) + ": shape " +
                                  shape_str(ta.shape) + " vs " +
                                  shape_str(tb.shape));
    }
    Tensor out(ta.shape);
    for (std::size_t i = 0; i < ta.size(); ++i) {
      switch (op) {
        case Op::Add:
          out.data[i] = ta.data[i] + tb.data[i];
          break;
        case Op::Sub:
          out.data[i] = ta.data[i] - tb.data[i];
          break;
        case Op::Mul:
          out.data[i] = ta.data[i] * tb.data[i];
          break;
        default:
          throw std::logic_error("binary_same_shape: bad op");
      }
    }
    return op_node(op, a, b, std::move(out));
  }

  std::vector<double>& ensure(int id) {
    if (grads_[id].empty()) grads_[id].assign(nodes_[id].val.size(), 0.0);
    return grads_[id];
  }

  bool wants(int id) const { return id >= 0 && nodes_[id].needs_grad; }

  void scatter(int i) {
    const Node& n = nodes_[i];
    const std::vector<double>& g = grads_[i];
    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::Add: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (wants(n.b)) {
          auto& gb = ensure(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
        }
        break;
      }
      case Op::Sub: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (wants(n.b)) {
          auto& gb = ensure(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& ta = nodes_[n.a].val;
        const Tensor& tb = nodes_[n.b].val;
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * tb.data[k];
        }
        if (wants(n.b)) {
          auto& gb = ensure(n.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * ta.data[k];
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& ta = nodes_[n.a].val;
        const Tensor& tb = nodes_[n.b].val;
        const std::size_t m = ta.shape[0], k = ta.shape[1], c = tb.shape[1];
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t i2 = 0; i2 < m; ++i2) {
            const double* grow = &g[i2 * c];
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* brow = &tb.data[kk * c];
              double s = 0.0;
              for (std::size_t j = 0; j < c; ++j) s += grow[j] * brow[j];
              ga[i2 * k + kk] += s;
            }
          }
        }
        if (wants(n.b)) {
          auto& gb = ensure(n.b);
          for (std::size_t i2 = 0; i2 < m; ++i2) {
            const double* grow = &g[i2 * c];
            const double* arow = &ta.data[i2 * k];
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double av = arow[kk];
              double* gbrow = &gb[kk * c];
              for (std::size_t j = 0; j < c; ++j) gbrow[j] += av * grow[j];
            }
          }
        }
        break;
      }
      case Op::Neg: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] -= g[k];
        }
        break;
      }
      case Op::Exp: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k)
            ga[k] += g[k] * n.val.data[k];
        }
        break;
      }
      case Op::Log: {
        if (wants(n.a)) {
          const Tensor& ta = nodes_[n.a].val;
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / ta.data[k];
        }
        break;
      }
      case Op::Square: {
        if (wants(n.a)) {
          const Tensor& ta = nodes_[n.a].val;
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k)
            ga[k] += 2.0 * g[k] * ta.data[k];
        }
        break;
      }
      case Op::Sum: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[0];
        }
        break;
      }
      case Op::Mean: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          const double gi = g[0] / static_cast<double>(ga.size());
          for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += gi;
        }
        break;
      }
      case Op::LeakyRelu: {
        if (wants(n.a)) {
          const Tensor& ta = nodes_[n.a].val;
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k)
            ga[k] += g[k] * (ta.data[k] > 0.0 ? 1.0 : n.p0);
        }
        break;
      }
      case Op::Tanh: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) {
            const double y = n.val.data[k];
            ga[k] += g[k] * (1.0 - y * y);
          }
        }
        break;
      }
      case Op::Sigmoid: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) {
            const double y = n.val.data[k];
            ga[k] += g[k] * y * (1.0 - y);
          }
        }
        break;
      }
      case Op::PairwiseSqDist: {
        const Tensor& ta = nodes_[n.a].val;
        const Tensor& tb = nodes_[n.b].val;
        const std::size_t m = ta.shape[0], nn = tb.shape[0], L = ta.shape[1];
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t i2 = 0; i2 < m; ++i2) {
            for (std::size_t j = 0; j < nn; ++j) {
              const double gij = 2.0 * g[i2 * nn + j];
              if (gij == 0.0) continue;
              for (std::size_t l = 0; l < L; ++l) {
                ga[i2 * L + l] +=
                    gij * (ta.data[i2 * L + l] - tb.data[j * L + l]);
              }
            }
          }
        }
        if (wants(n.b)) {
          auto& gb = ensure(n.b);
          for (std::size_t i2 = 0; i2 < m; ++i2) {
            for (std::size_t j = 0; j < nn; ++j) {
              const double gij = 2.0 * g[i2 * nn + j];
              if (gij == 0.0) continue;
              for (std::size_t l = 0; l < L; ++l) {
                gb[j * L + l] +=
                    gij * (tb.data[j * L + l] - ta.data[i2 * L + l]);
              }
            }
          }
        }
        break;
      }
      case Op::BroadcastAdd: {
        const Tensor& tm = nodes_[n.a].val;
        const std::size_t m = tm.shape[0], c = tm.shape[1];
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (wants(n.b)) {
          auto& gb = ensure(n.b);
          for (std::size_t i2 = 0; i2 < m; ++i2) {
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i2 * c + j];
          }
        }
        break;
      }
      case Op::Scale: {
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.p0 * g[k];
        }
        break;
      }
      case Op::ConcatRows: {
        const std::size_t na = nodes_[n.a].val.size();
        if (wants(n.a)) {
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < na; ++k) ga[k] += g[k];
        }
        if (wants(n.b)) {
          auto& gb = ensure(n.b);
          for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g[na + k];
        }
        break;
      }
      case Op::Clamp: {
        if (wants(n.a)) {
          const Tensor& ta = nodes_[n.a].val;
          auto& ga = ensure(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) {
            if (ta.data[k] > n.p0 && ta.data[k] < n.p1) ga[k] += g[k];
          }
        }
        break;
      }
    }
  }
};

using Var = Graph::Var;

}  // namespace hazekit
