#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "gateslab/params.hpp"
#include "gateslab/tape.hpp"

namespace gateslab {

// Central-difference verification of reverse-mode gradients.
//
// The builder constructs a scalar loss on a fresh tape from the current
// parameter values. Coordinates where the one-sided differences disagree
// (hinge/relu kinks) are detected via the second difference and skipped.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

using LossBuilder = std::function<int(Tape&, const BoundParams&)>;

inline GradCheckReport grad_check(const LossBuilder& build, ParamStore& params,
                                  double eps = 1e-5) {
  GradCheckReport rep;

  Tape tape;
  BoundParams bound(tape, params);
  const int loss = build(tape, bound);
  const double f0 = tape.val(loss).data[0];
  if (!std::isfinite(f0)) throw NumericsError("grad_check: non-finite loss");
  const auto analytic = bound.named_grads(tape.backward(loss));

  auto eval = [&](void) -> double {
    Tape t;
    BoundParams b(t, params);
    return t.val(build(t, b)).data[0];
  };

  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    const Tensor& ga = analytic.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + eps;
      const double fp = eval();
      p.data[i] = orig - eps;
      const double fm = eval();
      p.data[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericsError("grad_check: non-finite intermediate at '" + name + "'");
      // A kink makes the second difference O(eps) instead of O(eps^2).
      const double scale = std::max({1.0, std::fabs(fp), std::fabs(fm), std::fabs(f0)});
      if (std::fabs(fp + fm - 2.0 * f0) > 1e-2 * eps * scale) {
        ++rep.skipped_kinks;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = ga.data[i];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      rep.max_rel_err = std::max(rep.max_rel_err, std::fabs(a - numeric) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

// Single-tensor convenience: checks d loss / d x for a function of one input.
inline GradCheckReport grad_check1(
    const std::function<int(Tape&, int)>& f, const Tensor& x, double eps = 1e-5) {
  ParamStore store;
  store.add("x", x);
  return grad_check(
      [&](Tape& t, const BoundParams& p) { return f(t, p("x")); }, store, eps);
}

}  // namespace gateslab
