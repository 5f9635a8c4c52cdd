#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gateslab/errors.hpp"

namespace gateslab {

// Dense row-major tensor of 64-bit floats. Rank 0 (empty shape) is a scalar
// with one element.

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Shortest exact decimal form used across all file formats.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

struct Tensor {
  Shape shape;
  std::vector<double> data;
  int node = -1;  // tape node id; -1 when untraced

  Tensor() : data(1, 0.0) {}

  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), data(numel(shape), fill) {}

  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape))
      throw ShapeError("tensor: " + std::to_string(data.size()) +
                       " values for shape " + shape_str(shape));
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.data[0] = v;
    return t;
  }

  static Tensor row(std::vector<double> d) {
    Shape s{d.size()};
    return Tensor(std::move(s), std::move(d));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::initializer_list<std::size_t> idx) {
    return data[offset_of(idx)];
  }
  double at(std::initializer_list<std::size_t> idx) const {
    return data[offset_of(idx)];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::size_t offset_of(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0, k = 0;
    for (std::size_t i : idx) {
      off = off * shape[k] + i;
      ++k;
    }
    return off;
  }
};

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Numpy-style broadcasting: shapes are aligned on trailing axes and size-1
// axes stretch. Throws ShapeError naming the op when incompatible.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` aligned to a broadcast output shape; stretched axes get
// stride 0 so the same element is revisited.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  const auto in_st = row_major_strides(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i)
    st[off + i] = in[i] == 1 ? 0 : in_st[i];
  return st;
}

// Iterates a broadcast binary op. Calls f(out_off, a_off, b_off) for every
// output element; the innermost axis runs as a tight loop.
template <class F>
void for_each_broadcast2(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const std::size_t n = numel(out);
  if (n == 0) return;
  if (out.empty()) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  const std::size_t rank = out.size();
  const std::size_t inner = out[rank - 1];
  const std::size_t ia = sa[rank - 1], ib = sb[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t base = 0; base < n; base += inner) {
    for (std::size_t j = 0; j < inner; ++j)
      f(base + j, oa + j * ia, ob + j * ib);
    // advance the outer odometer
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      oa += sa[ax];
      ob += sb[ax];
      if (++idx[ax] < out[ax]) break;
      oa -= sa[ax] * out[ax];
      ob -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace gateslab
