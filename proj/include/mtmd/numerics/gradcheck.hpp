#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>

#include "mtmd/numerics/tape.hpp"
#include "mtmd/numerics/tensor.hpp"

namespace mtmd {

using NamedTensors = std::map<std::string, Tensor>;
using NamedVars = std::map<std::string, Var>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// |a−n| / max(|a|, |n|, floor). The floor keeps near-zero entries from
/// turning round-off into large relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares tape gradients of a scalar function against central finite
/// differences for every entry of every named input.
///
/// `fn(Tape&, const NamedVars&) -> Var` must build the same graph on every
/// call; inputs are registered as parameters under their map keys.
template <class Fn>
GradCheckResult gradient_check(const NamedTensors& inputs, Fn&& fn, double step = 1e-5, double floor = 1e-6) {
  auto evaluate = [&](const NamedTensors& values, Gradients* grads) {
    Tape tape;
    NamedVars vars;
    for (const auto& [name, value] : values) vars.emplace(name, tape.parameter(name, value));
    Var loss = fn(tape, vars);
    const double v = loss.value().item();
    if (grads) *grads = tape.backward(loss);
    return v;
  };

  Gradients analytic;
  evaluate(inputs, &analytic);

  GradCheckResult result;
  NamedTensors probe = inputs;
  for (const auto& [name, value] : inputs) {
    Tensor& p = probe.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      p[i] = orig + step;
      const double up = evaluate(probe, nullptr);
      p[i] = orig - step;
      const double down = evaluate(probe, nullptr);
      p[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.at(name)[i];
      const double err = relative_error(a, numeric, floor);
      ++result.entries_checked;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_name = name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mtmd
