// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ensnet/kernels.hpp"

namespace ensnet {

enum class Mode { Training, Inference };

/// A trainable tensor and its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { grad.zero(); }
};

/// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)).
template <typename T>
void init_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
struct Conv2d {
  Param<T> weight;  // [F,C,k,k]
  Param<T> bias;    // [F]
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv2d() = default;
  Conv2d(const std::string& prefix, std::size_t in_ch, std::size_t filters, std::size_t k,
         std::size_t stride_, std::size_t pad_)
      : weight(prefix + ".weight", {filters, in_ch, k, k}),
        bias(prefix + ".bias", {filters}),
        stride(stride_),
        pad(pad_) {}

  void init(std::mt19937_64& rng) {
    const std::size_t kk = weight.value.dim(2) * weight.value.dim(3);
    init_uniform(weight.value, weight.value.dim(1) * kk, weight.value.dim(0) * kk, rng);
    bias.value.zero();
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return kernels::conv2d_forward(x, weight.value, bias.value, stride, pad);
  }
  /// Accumulates parameter gradients, returns the input gradient.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    auto g = kernels::conv2d_backward(x, weight.value, dy, stride, pad);
    accumulate(weight.grad, g.dw);
    accumulate(bias.grad, g.db);
    return std::move(g.dx);
  }

  static void accumulate(Tensor<T>& into, const Tensor<T>& g) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
  }
};

template <typename T>
struct BatchNorm {
  Param<T> gamma;
  Param<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.99);
  T eps = T(1e-5);

  BatchNorm() = default;
  BatchNorm(const std::string& prefix, std::size_t channels, T momentum_, T eps_)
      : gamma(prefix + ".gamma", {channels}),
        beta(prefix + ".beta", {channels}),
        running_mean({channels}, T{0}),
        running_var({channels}, T{1}),
        momentum(momentum_),
        eps(eps_) {
    gamma.value.fill(T{1});
  }

  /// Training mode normalizes with batch statistics and folds them into the
  /// running averages; inference mode uses the running averages.
  BatchNormForward<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::Inference) return infer(x);
    auto f = kernels::batchnorm_forward_train(x, gamma.value, beta.value, eps);
    for (std::size_t c = 0; c < running_mean.size(); ++c) {
      running_mean[c] = momentum * running_mean[c] + (T{1} - momentum) * f.mean[c];
      running_var[c] = momentum * running_var[c] + (T{1} - momentum) * f.var[c];
    }
    return f;
  }
  BatchNormForward<T> infer(const Tensor<T>& x) const {
    return kernels::batchnorm_forward_infer(x, gamma.value, beta.value, running_mean, running_var,
                                            eps);
  }
  Tensor<T> backward(const Tensor<T>& dy, const BatchNormForward<T>& cache, Mode mode) {
    auto g = mode == Mode::Training ? kernels::batchnorm_backward_train(dy, cache, gamma.value)
                                    : kernels::batchnorm_backward_infer(dy, cache, gamma.value);
    Conv2d<T>::accumulate(gamma.grad, g.dgamma);
    Conv2d<T>::accumulate(beta.grad, g.dbeta);
    return std::move(g.dx);
  }
};

template <typename T>
struct Dense {
  Param<T> weight;  // [D,U]
  Param<T> bias;    // [U]

  Dense() = default;
  Dense(const std::string& prefix, std::size_t in, std::size_t units)
      : weight(prefix + ".weight", {in, units}), bias(prefix + ".bias", {units}) {}

  void init(std::mt19937_64& rng) {
    init_uniform(weight.value, weight.value.dim(0), weight.value.dim(1), rng);
    bias.value.zero();
  }
  Tensor<T> forward(const Tensor<T>& x) const {
    return kernels::dense_forward(x, weight.value, bias.value);
  }
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    auto g = kernels::dense_backward(x, weight.value, dy);
    Conv2d<T>::accumulate(weight.grad, g.dw);
    Conv2d<T>::accumulate(bias.grad, g.db);
    return std::move(g.dx);
  }
};

/// conv -> batch-norm -> tanh -> 2x2 max-pool.
template <typename T>
struct ConvBlock {
  Conv2d<T> conv;
  BatchNorm<T> bn;

  struct Cache {
    Tensor<T> input;
    BatchNormForward<T> bn;
    Tensor<T> activation;
    std::vector<std::uint32_t> argmax;
  };

  ConvBlock() = default;
  ConvBlock(const std::string& prefix, std::size_t in_ch, std::size_t filters, std::size_t k,
            std::size_t stride, std::size_t pad, T bn_momentum, T bn_eps)
      : conv(prefix + ".conv", in_ch, filters, k, stride, pad),
        bn(prefix + ".bn", filters, bn_momentum, bn_eps) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Cache& cache) {
    cache.input = x;
    cache.bn = bn.forward(conv.forward(x), mode);
    cache.activation = kernels::tanh_forward(cache.bn.y);
    auto pooled = kernels::maxpool2_forward(cache.activation);
    cache.argmax = std::move(pooled.argmax);
    return std::move(pooled.y);
  }
  Tensor<T> infer(const Tensor<T>& x) const {
    auto normed = bn.infer(conv.forward(x));
    return kernels::maxpool2_forward(kernels::tanh_forward(normed.y)).y;
  }
  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache, Mode mode) {
    auto d_act = kernels::maxpool2_backward(dy, cache.argmax, cache.activation.shape());
    auto d_bn = kernels::tanh_backward(cache.activation, d_act);
    return conv.backward(cache.input, bn.backward(d_bn, cache.bn, mode));
  }

  std::vector<Param<T>*> params() { return {&conv.weight, &conv.bias, &bn.gamma, &bn.beta}; }
  std::vector<const Param<T>*> params() const {
    return {&conv.weight, &conv.bias, &bn.gamma, &bn.beta};
  }
};

}  // namespace ensnet
