#pragma once

#include <cmath>
#include <map>
#include <string>

#include "mtmd/harness/config.hpp"
#include "mtmd/numerics/gradcheck.hpp"

namespace mtmd {

/// SGD with optional heavy-ball momentum, or Adam. State is keyed by
/// parameter name, so iteration order (and therefore the result) is fixed.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double momentum = 0.0)
      : kind_(kind), lr_(learning_rate), momentum_(momentum) {}

  void step(NamedTensors& params, const Gradients& grads) {
    ++t_;
    for (auto& [name, p] : params) {
      const auto it = grads.find(name);
      if (it == grads.end()) continue;
      const Tensor& g = it->second;
      if (kind_ == OptimizerKind::sgd) {
        if (momentum_ == 0.0) {
          for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
          continue;
        }
        Tensor& v = slot(first_, name, p);
        for (std::size_t i = 0; i < p.size(); ++i) {
          v[i] = momentum_ * v[i] + g[i];
          p[i] -= lr_ * v[i];
        }
      } else {
        Tensor& m = slot(first_, name, p);
        Tensor& v = slot(second_, name, p);
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < p.size(); ++i) {
          m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
          v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
          p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
        }
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kAdamEps = 1e-8;

  static Tensor& slot(std::map<std::string, Tensor>& store, const std::string& name, const Tensor& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor(like.shape(), 0.0)).first;
    return it->second;
  }

  OptimizerKind kind_;
  double lr_;
  double momentum_;
  long t_ = 0;
  std::map<std::string, Tensor> first_, second_;
};

}  // namespace mtmd
