#pragma once

#include <cmath>
#include <span>
#include <string>

#include "mtf/core/tape.hpp"

namespace mtf {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Momentum SGD with L2 decay folded into the velocity:
///   v <- momentum * v + grad + weight_decay * value
///   value <- value - lr * v
/// Gradients are zeroed afterwards. A non-finite gradient aborts before any
/// parameter is touched.
template <class T>
void sgd_step(std::span<Parameter<T>> params, const SgdConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("sgd: learning rate must be > 0");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw ConfigError("sgd: momentum must be in [0,1)");
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!std::isfinite(p.grad[i])) {
        throw NumericError("sgd: non-finite gradient in parameter '" + p.name + "' at index " + std::to_string(i));
      }
    }
  }
  const T lr = static_cast<T>(cfg.lr), mu = static_cast<T>(cfg.momentum), wd = static_cast<T>(cfg.weight_decay);
  for (auto& p : params) {
    T* v = p.momentum.ptr();
    T* w = p.value.ptr();
    T* g = p.grad.ptr();
    for (std::size_t i = 0, n = p.value.size(); i < n; ++i) {
      v[i] = mu * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
      g[i] = T(0);
    }
  }
}

template <class T>
void zero_grads(std::span<Parameter<T>> params) {
  for (auto& p : params) p.grad.fill(T(0));
}

}  // namespace mtf
