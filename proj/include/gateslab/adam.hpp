#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <unordered_map>

#include "gateslab/params.hpp"
#include "gateslab/tensor.hpp"

namespace gateslab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard ADAM with bias correction. Moments are created lazily with the
// shape of their parameter; t counts completed steps.
struct AdamState {
  AdamConfig cfg;
  long t = 0;
  std::unordered_map<std::string, Tensor> m, v;
};

inline void adam_step(ParamStore& params,
                      const std::unordered_map<std::string, Tensor>& grads,
                      AdamState& state) {
  state.t += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    auto git = grads.find(name);
    if (git == grads.end()) throw Error("adam_step: missing gradient for '" + name + "'");
    const Tensor& g = git->second;
    if (g.shape != p.shape)
      throw ShapeError("adam_step: grad shape " + shape_str(g.shape) +
                       " != param shape " + shape_str(p.shape) + " for '" + name + "'");
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape, 0.0)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape, 0.0)).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
      v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
    if (!p.all_finite())
      throw NumericsError("adam_step: non-finite parameter '" + name + "'");
  }
}

}  // namespace gateslab
