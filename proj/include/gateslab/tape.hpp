#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "gateslab/errors.hpp"
#include "gateslab/tensor.hpp"

namespace gateslab {

// Reverse-mode automatic differentiation over an append-only tape.
//
// Every operation appends a node holding its output value and input ids, so
// the tape is topologically ordered by construction. backward() runs a single
// reverse sweep; saved activations are simply the input nodes' values.

enum class Op {
  leaf,
  constant,
  matmul,
  add,
  mul,
  sigmoid,
  relu,
  softplus,
  square,
  sum_axis,
  logsumexp_axis,
  mean_all,
  concat_axis,
  expand_axis,
  reshape,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::mul: return "elementwise_mul";
    case Op::sigmoid: return "sigmoid";
    case Op::relu: return "relu";
    case Op::softplus: return "softplus";
    case Op::square: return "square";
    case Op::sum_axis: return "sum_over_axis";
    case Op::logsumexp_axis: return "logsumexp_over_axis";
    case Op::mean_all: return "mean";
    case Op::concat_axis: return "concat_axis";
    case Op::expand_axis: return "expand_axis";
    case Op::reshape: return "reshape";
  }
  return "?";
}

namespace detail {

inline double stable_sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// C += A(m,k) * B(k,n)
inline void mm_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA += G(m,n) * B^T(n,k)
inline void mm_grad_a(const double* g, const double* b, double* da, std::size_t m,
                      std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* darow = da + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      darow[kk] += s;
    }
  }
}

// dB += A^T(k,m) * G(m,n)
inline void mm_grad_b(const double* a, const double* g, double* db, std::size_t m,
                      std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      double* dbrow = db + kk * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1, mid = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit sp;
  for (int i = 0; i < axis; ++i) sp.outer *= s[i];
  sp.mid = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

// Walks the broadcast batch cells of a matmul. f(out_cell, a_cell, b_cell)
// receives element offsets of each operand's matrix block.
template <class F>
void for_each_batch_cell(const Shape& out_batch, const Shape& a_batch,
                         const Shape& b_batch, std::size_t a_block,
                         std::size_t b_block, std::size_t out_block, F&& f) {
  const std::size_t cells = numel(out_batch);
  auto sa = broadcast_strides(a_batch, out_batch);
  auto sb = broadcast_strides(b_batch, out_batch);
  std::vector<std::size_t> idx(out_batch.size(), 0);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t ax = 0; ax < out_batch.size(); ++ax) {
      oa += idx[ax] * sa[ax];
      ob += idx[ax] * sb[ax];
    }
    f(c * out_block, oa * a_block, ob * b_block);
    for (std::size_t ax = out_batch.size(); ax-- > 0;) {
      if (++idx[ax] < out_batch[ax]) break;
      idx[ax] = 0;
    }
  }
}

}  // namespace detail

struct TapeNode {
  Op op;
  std::vector<int> inputs;
  Tensor value;
  int axis = -1;
  bool needs_grad = false;
};

struct BackwardResult {
  std::unordered_map<int, Tensor> leaf_grads;  // keyed by leaf node id
  std::size_t visits = 0;                      // reverse-sweep visit count
};

class Tape {
 public:
  std::size_t size() const { return nodes_.size(); }

  const Tensor& val(int id) const {
    check_id(id);
    return nodes_[id].value;
  }

  const TapeNode& node(int id) const {
    check_id(id);
    return nodes_[id];
  }

  int leaf(const Tensor& v) {
    TapeNode n{Op::leaf, {}, v, -1, true};
    n.value.node = -1;
    return push(std::move(n), false);
  }

  int constant(const Tensor& v) {
    TapeNode n{Op::constant, {}, v, -1, false};
    n.value.node = -1;
    return push(std::move(n), false);
  }

  int constant(double v) { return constant(Tensor::scalar(v)); }

  int matmul(int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() < 2 || B.rank() < 2)
      throw ShapeError("matmul: operands must have rank >= 2, got " +
                       shape_str(A.shape) + " and " + shape_str(B.shape));
    const std::size_t m = A.shape[A.rank() - 2], ka = A.shape[A.rank() - 1];
    const std::size_t kb = B.shape[B.rank() - 2], nn = B.shape[B.rank() - 1];
    if (ka != kb)
      throw ShapeError("matmul: inner dims disagree for " + shape_str(A.shape) +
                       " and " + shape_str(B.shape));
    Shape a_batch(A.shape.begin(), A.shape.end() - 2);
    Shape b_batch(B.shape.begin(), B.shape.end() - 2);
    Shape out_batch = broadcast_shape(a_batch, b_batch, "matmul");
    Shape out_shape = out_batch;
    out_shape.push_back(m);
    out_shape.push_back(nn);
    Tensor out(out_shape, 0.0);
    detail::for_each_batch_cell(
        out_batch, a_batch, b_batch, m * ka, ka * nn, m * nn,
        [&](std::size_t oc, std::size_t ac, std::size_t bc) {
          detail::mm_acc(A.data.data() + ac, B.data.data() + bc,
                         out.data.data() + oc, m, ka, nn);
        });
    return push({Op::matmul, {a, b}, std::move(out)}, true);
  }

  int add(int a, int b) { return binary(Op::add, a, b); }
  int mul(int a, int b) { return binary(Op::mul, a, b); }

  int sigmoid(int x) {
    Tensor out = val(x);
    for (double& v : out.data) v = detail::stable_sigmoid(v);
    return push({Op::sigmoid, {x}, std::move(out)}, true);
  }

  int relu(int x) {
    Tensor out = val(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push({Op::relu, {x}, std::move(out)}, true);
  }

  int softplus(int x) {
    Tensor out = val(x);
    for (double& v : out.data) v = detail::stable_softplus(v);
    return push({Op::softplus, {x}, std::move(out)}, true);
  }

  int square(int x) {
    Tensor out = val(x);
    for (double& v : out.data) v = v * v;
    return push({Op::square, {x}, std::move(out)}, true);
  }

  int sum_axis(int x, int axis) {
    const Tensor& X = val(x);
    check_axis(X, axis, "sum_over_axis");
    const auto sp = detail::split_axis(X.shape, axis);
    Shape out_shape = X.shape;
    out_shape.erase(out_shape.begin() + axis);
    Tensor out(out_shape, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t mth = 0; mth < sp.mid; ++mth) {
        const double* src = X.data.data() + (o * sp.mid + mth) * sp.inner;
        double* dst = out.data.data() + o * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
      }
    TapeNode n{Op::sum_axis, {x}, std::move(out)};
    n.axis = axis;
    return push(std::move(n), true);
  }

  int logsumexp_axis(int x, int axis) {
    const Tensor& X = val(x);
    check_axis(X, axis, "logsumexp_over_axis");
    const auto sp = detail::split_axis(X.shape, axis);
    Shape out_shape = X.shape;
    out_shape.erase(out_shape.begin() + axis);
    Tensor out(out_shape, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        double mx = -HUGE_VAL;
        for (std::size_t mth = 0; mth < sp.mid; ++mth)
          mx = std::max(mx, X.data[(o * sp.mid + mth) * sp.inner + i]);
        double s = 0.0;
        for (std::size_t mth = 0; mth < sp.mid; ++mth)
          s += std::exp(X.data[(o * sp.mid + mth) * sp.inner + i] - mx);
        out.data[o * sp.inner + i] = mx + std::log(s);
      }
    TapeNode n{Op::logsumexp_axis, {x}, std::move(out)};
    n.axis = axis;
    return push(std::move(n), true);
  }

  int mean_all(int x) {
    const Tensor& X = val(x);
    double s = 0.0;
    for (double v : X.data) s += v;
    return push({Op::mean_all, {x}, Tensor::scalar(s / static_cast<double>(X.size()))},
                true);
  }

  int concat_axis(const std::vector<int>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat_axis: no inputs");
    const Tensor& first = val(xs[0]);
    check_axis(first, axis, "concat_axis");
    Shape out_shape = first.shape;
    std::size_t total = 0;
    for (int id : xs) {
      const Tensor& t = val(id);
      if (t.rank() != first.rank())
        throw ShapeError("concat_axis: rank mismatch " + shape_str(t.shape) +
                         " vs " + shape_str(first.shape));
      for (std::size_t d = 0; d < t.rank(); ++d)
        if (d != static_cast<std::size_t>(axis) && t.shape[d] != first.shape[d])
          throw ShapeError("concat_axis: shapes " + shape_str(t.shape) + " and " +
                           shape_str(first.shape) + " differ off-axis");
      total += t.shape[axis];
    }
    out_shape[axis] = total;
    Tensor out(out_shape, 0.0);
    const auto osp = detail::split_axis(out_shape, axis);
    std::size_t written = 0;
    for (int id : xs) {
      const Tensor& t = val(id);
      const auto tsp = detail::split_axis(t.shape, axis);
      for (std::size_t o = 0; o < tsp.outer; ++o) {
        const double* src = t.data.data() + o * tsp.mid * tsp.inner;
        double* dst = out.data.data() + (o * osp.mid + written) * osp.inner;
        std::copy(src, src + tsp.mid * tsp.inner, dst);
      }
      written += t.shape[axis];
    }
    TapeNode n{Op::concat_axis, xs, std::move(out)};
    n.axis = axis;
    return push(std::move(n), true);
  }

  int expand_axis(int x, int axis) {
    const Tensor& X = val(x);
    if (axis < 0 || static_cast<std::size_t>(axis) > X.rank())
      throw ShapeError("expand_axis: axis " + std::to_string(axis) +
                       " out of range for " + shape_str(X.shape));
    Shape out_shape = X.shape;
    out_shape.insert(out_shape.begin() + axis, 1);
    Tensor out(out_shape, X.data);
    TapeNode n{Op::expand_axis, {x}, std::move(out)};
    n.axis = axis;
    return push(std::move(n), true);
  }

  int reshape(int x, Shape new_shape) {
    const Tensor& X = val(x);
    if (numel(new_shape) != X.size())
      throw ShapeError("reshape: cannot view " + shape_str(X.shape) + " as " +
                       shape_str(new_shape));
    Tensor out(std::move(new_shape), X.data);
    return push({Op::reshape, {x}, std::move(out)}, true);
  }

  // Reverse sweep from a one-element loss node. Visits every tape node
  // exactly once and returns gradients for every leaf (zeros if unreachable).
  BackwardResult backward(int loss) const {
    check_id(loss);
    if (val(loss).size() != 1)
      throw TraceError("backward: loss must have exactly one element, got shape " +
                       shape_str(val(loss).shape));
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    grads[loss] = Tensor(nodes_[loss].value.shape, 1.0);
    has[loss] = true;

    BackwardResult res;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      ++res.visits;
      const TapeNode& nd = nodes_[i];
      if (!has[i] || !nd.needs_grad) continue;
      propagate(static_cast<int>(i), grads, has);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op != Op::leaf) continue;
      if (has[i])
        res.leaf_grads.emplace(static_cast<int>(i), std::move(grads[i]));
      else
        res.leaf_grads.emplace(static_cast<int>(i), Tensor(nodes_[i].value.shape, 0.0));
    }
    return res;
  }

 private:
  std::vector<TapeNode> nodes_;

  void check_id(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw TraceError("tape: node id " + std::to_string(id) + " not on this tape");
  }

  static void check_axis(const Tensor& t, int axis, const char* op) {
    if (axis < 0 || static_cast<std::size_t>(axis) >= t.rank())
      throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                       " out of range for " + shape_str(t.shape));
  }

  int push(TapeNode n, bool derive_needs_grad) {
    if (derive_needs_grad) {
      n.needs_grad = false;
      for (int in : n.inputs)
        if (nodes_[in].needs_grad) n.needs_grad = true;
    }
    if (!n.value.all_finite())
      throw NumericsError(std::string("non-finite value produced by ") + op_name(n.op));
    const int id = static_cast<int>(nodes_.size());
    n.value.node = id;
    nodes_.push_back(std::move(n));
    return id;
  }

  int binary(Op op, int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Shape out_shape = broadcast_shape(A.shape, B.shape, op_name(op));
    Tensor out(out_shape, 0.0);
    if (op == Op::add) {
      for_each_broadcast2(out_shape, A.shape, B.shape,
                          [&](std::size_t o, std::size_t ia, std::size_t ib) {
                            out.data[o] = A.data[ia] + B.data[ib];
                          });
    } else {
      for_each_broadcast2(out_shape, A.shape, B.shape,
                          [&](std::size_t o, std::size_t ia, std::size_t ib) {
                            out.data[o] = A.data[ia] * B.data[ib];
                          });
    }
    return push({op, {a, b}, std::move(out)}, true);
  }

  void ensure(std::vector<Tensor>& grads, std::vector<bool>& has, int id) const {
    if (!has[id]) {
      grads[id] = Tensor(nodes_[id].value.shape, 0.0);
      has[id] = true;
    }
  }

  bool wants(int id) const { return nodes_[id].needs_grad; }

  void propagate(int i, std::vector<Tensor>& grads, std::vector<bool>& has) const {
    const TapeNode& nd = nodes_[i];
    const Tensor& g = grads[i];
    switch (nd.op) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::matmul: {
        const int a = nd.inputs[0], b = nd.inputs[1];
        const Tensor& A = nodes_[a].value;
        const Tensor& B = nodes_[b].value;
        const std::size_t m = A.shape[A.rank() - 2], k = A.shape[A.rank() - 1];
        const std::size_t n = B.shape[B.rank() - 1];
        Shape a_batch(A.shape.begin(), A.shape.end() - 2);
        Shape b_batch(B.shape.begin(), B.shape.end() - 2);
        Shape out_batch(nd.value.shape.begin(), nd.value.shape.end() - 2);
        const bool wa = wants(a), wb = wants(b);
        if (wa) ensure(grads, has, a);
        if (wb) ensure(grads, has, b);
        detail::for_each_batch_cell(
            out_batch, a_batch, b_batch, m * k, k * n, m * n,
            [&](std::size_t oc, std::size_t ac, std::size_t bc) {
              if (wa)
                detail::mm_grad_a(g.data.data() + oc, B.data.data() + bc,
                                  grads[a].data.data() + ac, m, k, n);
              if (wb)
                detail::mm_grad_b(A.data.data() + ac, g.data.data() + oc,
                                  grads[b].data.data() + bc, m, k, n);
            });
        break;
      }
      case Op::add:
      case Op::mul: {
        const int a = nd.inputs[0], b = nd.inputs[1];
        const Tensor& A = nodes_[a].value;
        const Tensor& B = nodes_[b].value;
        const bool wa = wants(a), wb = wants(b);
        if (wa) ensure(grads, has, a);
        if (wb) ensure(grads, has, b);
        if (nd.op == Op::add) {
          for_each_broadcast2(nd.value.shape, A.shape, B.shape,
                              [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                if (wa) grads[a].data[ia] += g.data[o];
                                if (wb) grads[b].data[ib] += g.data[o];
                              });
        } else {
          for_each_broadcast2(nd.value.shape, A.shape, B.shape,
                              [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                if (wa) grads[a].data[ia] += g.data[o] * B.data[ib];
                                if (wb) grads[b].data[ib] += g.data[o] * A.data[ia];
                              });
        }
        break;
      }
      case Op::sigmoid: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double y = nd.value.data[j];
          grads[x].data[j] += g.data[j] * y * (1.0 - y);
        }
        break;
      }
      case Op::relu: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        const Tensor& X = nodes_[x].value;
        // subgradient at the kink is 0
        for (std::size_t j = 0; j < g.size(); ++j)
          if (X.data[j] > 0.0) grads[x].data[j] += g.data[j];
        break;
      }
      case Op::softplus: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        const Tensor& X = nodes_[x].value;
        for (std::size_t j = 0; j < g.size(); ++j)
          grads[x].data[j] += g.data[j] * detail::stable_sigmoid(X.data[j]);
        break;
      }
      case Op::square: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        const Tensor& X = nodes_[x].value;
        for (std::size_t j = 0; j < g.size(); ++j)
          grads[x].data[j] += 2.0 * g.data[j] * X.data[j];
        break;
      }
      case Op::sum_axis: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        const Tensor& X = nodes_[x].value;
        const auto sp = detail::split_axis(X.shape, nd.axis);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t mth = 0; mth < sp.mid; ++mth) {
            double* dst = grads[x].data.data() + (o * sp.mid + mth) * sp.inner;
            const double* src = g.data.data() + o * sp.inner;
            for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
          }
        break;
      }
      case Op::logsumexp_axis: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        const Tensor& X = nodes_[x].value;
        const auto sp = detail::split_axis(X.shape, nd.axis);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t mth = 0; mth < sp.mid; ++mth)
            for (std::size_t j = 0; j < sp.inner; ++j) {
              const std::size_t xi = (o * sp.mid + mth) * sp.inner + j;
              const std::size_t oi = o * sp.inner + j;
              grads[x].data[xi] +=
                  g.data[oi] * std::exp(X.data[xi] - nd.value.data[oi]);
            }
        break;
      }
      case Op::mean_all: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        const double s = g.data[0] / static_cast<double>(nodes_[x].value.size());
        for (double& v : grads[x].data) v += s;
        break;
      }
      case Op::concat_axis: {
        const auto osp = detail::split_axis(nd.value.shape, nd.axis);
        std::size_t written = 0;
        for (int x : nd.inputs) {
          const Tensor& X = nodes_[x].value;
          const auto tsp = detail::split_axis(X.shape, nd.axis);
          if (wants(x)) {
            ensure(grads, has, x);
            for (std::size_t o = 0; o < tsp.outer; ++o) {
              double* dst = grads[x].data.data() + o * tsp.mid * tsp.inner;
              const double* src =
                  g.data.data() + (o * osp.mid + written) * osp.inner;
              for (std::size_t j = 0; j < tsp.mid * tsp.inner; ++j) dst[j] += src[j];
            }
          }
          written += X.shape[nd.axis];
        }
        break;
      }
      case Op::expand_axis:
      case Op::reshape: {
        const int x = nd.inputs[0];
        if (!wants(x)) break;
        ensure(grads, has, x);
        for (std::size_t j = 0; j < g.size(); ++j) grads[x].data[j] += g.data[j];
        break;
      }
    }
  }
};

}  // namespace gateslab
