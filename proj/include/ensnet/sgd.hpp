// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "ensnet/layers.hpp"

namespace ensnet {

struct SgdConfig {
  double base_lr = 0.001;
  double decay = 1e-5;  // per-update learning-rate decay
  double momentum = 0.9;

  bool operator==(const SgdConfig&) const = default;
};

/// Momentum SGD with inverse-time learning-rate decay:
///   lr_t = base_lr / (1 + decay * t),  v <- mu*v - lr_t*g,  w <- w + v.
/// Velocity is kept per parameter name, so steps may cover any subset of a
/// network's parameters.
template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdConfig config = {}) : config_(config) {
    if (config.base_lr < 0 || config.decay < 0 || config.momentum < 0 || config.momentum >= 1)
      throw ShapeError("invalid SGD configuration");
  }

  const SgdConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t n) { step_count_ = n; }

  double lr_at(std::uint64_t step) const {
    return config_.base_lr / (1.0 + config_.decay * static_cast<double>(step));
  }
  /// Learning rate the next step() will use.
  double effective_lr() const { return lr_at(step_count_); }

  /// One update over `params` using their accumulated gradients. Throws
  /// before touching anything if a gradient is non-finite or misshapen.
  void step(std::span<Param<T>* const> params) {
    for (const Param<T>* p : params) {
      if (p->grad.shape() != p->value.shape())
        throw ShapeError("gradient shape mismatch for " + p->name);
      if (!p->grad.all_finite()) throw NumericError("non-finite gradient for " + p->name);
    }
    const T lr = static_cast<T>(effective_lr());
    const T mu = static_cast<T>(config_.momentum);
    for (Param<T>* p : params) {
      auto [it, inserted] = velocity_.try_emplace(p->name, p->value.shape());
      Tensor<T>& v = it->second;
      if (v.shape() != p->value.shape()) throw ShapeError("velocity shape mismatch for " + p->name);
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = mu * v[i] - lr * p->grad[i];
        p->value[i] += v[i];
      }
    }
    ++step_count_;
  }

  std::map<std::string, Tensor<T>>& velocity() { return velocity_; }
  const std::map<std::string, Tensor<T>>& velocity() const { return velocity_; }

 private:
  SgdConfig config_;
  std::uint64_t step_count_ = 0;
  std::map<std::string, Tensor<T>> velocity_;
};

}  // namespace ensnet
