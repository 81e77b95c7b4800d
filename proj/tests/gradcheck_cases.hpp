// SPDX-License-Identifier: Apache-2.0
// Per-layer gradient checks shared by the unit tests and the acceptance
// runner. Analytic gradients come from the kernels instantiated for T; the
// central difference always runs on the 64-bit forward, so T = float checks
// the 32-bit backward against an accurate numeric derivative.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "ensnet/grad_check.hpp"
#include "ensnet/kernels.hpp"

namespace ensnet::testing {

enum class GcLayer { ConvSame, ConvValid, ConvStride2, MaxPool, BatchNormTrain, BatchNormInfer, Dense, Tanh, SoftmaxCrossEntropy };

inline const std::vector<std::pair<GcLayer, std::string>>& gc_layers() {
  static const std::vector<std::pair<GcLayer, std::string>> all{
      {GcLayer::ConvSame, "conv2d same"},
      {GcLayer::ConvValid, "conv2d valid"},
      {GcLayer::ConvStride2, "conv2d valid stride 2"},
      {GcLayer::MaxPool, "maxpool2 (no ties)"},
      {GcLayer::BatchNormTrain, "batchnorm training"},
      {GcLayer::BatchNormInfer, "batchnorm inference"},
      {GcLayer::Dense, "dense"},
      {GcLayer::Tanh, "tanh"},
      {GcLayer::SoftmaxCrossEntropy, "softmax+cross_entropy_soft"},
  };
  return all;
}

inline Tensor<double> gc_random(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

template <typename T>
Tensor<T> gc_cast(const Tensor<double>& t) {
  return t.template cast<T>();
}

/// Weighted sum loss L = sum(r * y) and its output gradient r.
inline double gc_project(const Tensor<double>& y, const Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
  return s;
}

/// Maximum relative error over every input and parameter of `layer` at one
/// seeded random point.
template <typename T>
double gc_layer_error(GcLayer layer, std::uint64_t seed, double h = 1e-4) {
  // Float analytic gradients carry ~1e-7 absolute rounding, so in 32-bit mode
  // elements below 1e-2 are held to an absolute 1e-6.
  const double floor = std::is_same_v<T, float> ? 1e-2 : 1e-8;
  std::mt19937_64 rng(seed);
  switch (layer) {
    case GcLayer::ConvSame:
    case GcLayer::ConvValid:
    case GcLayer::ConvStride2: {
      const std::size_t stride = layer == GcLayer::ConvStride2 ? 2 : 1;
      const std::size_t pad = layer == GcLayer::ConvSame ? 1 : 0;
      auto x = gc_random({2, 2, 5, 5}, rng);
      auto w = gc_random({3, 2, 3, 3}, rng);
      auto b = gc_random({3}, rng);
      const auto y0 = kernels::conv2d_forward(x, w, b, stride, pad);
      const auto r = gc_random(y0.shape(), rng);
      const auto g = kernels::conv2d_backward(gc_cast<T>(x), gc_cast<T>(w), gc_cast<T>(r), stride, pad);
      Tensor<double> db = g.db.template cast<double>();
      Tensor<double> dx = g.dx.template cast<double>(), dw = g.dw.template cast<double>();
      auto loss = [&] { return gc_project(kernels::conv2d_forward(x, w, b, stride, pad), r); };
      Tensor<double>* pts[] = {&x, &w, &b};
      const Tensor<double>* an[] = {&dx, &dw, &db};
      return grad_check<double>(loss, pts, an, h, floor);
    }
    case GcLayer::MaxPool: {
      // Distinct values at least 1e-2 apart keep every window's argmax stable
      // under +-h.
      Tensor<double> x({2, 2, 5, 4});
      std::vector<std::size_t> perm(x.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1e-2 * static_cast<double>(perm[i]) - 0.3;
      const auto p0 = kernels::maxpool2_forward(x);
      const auto r = gc_random(p0.y.shape(), rng);
      const auto pt = kernels::maxpool2_forward(gc_cast<T>(x));
      auto dx = kernels::maxpool2_backward(gc_cast<T>(r), pt.argmax, x.shape()).template cast<double>();
      auto loss = [&] { return gc_project(kernels::maxpool2_forward(x).y, r); };
      Tensor<double>* pts[] = {&x};
      const Tensor<double>* an[] = {&dx};
      return grad_check<double>(loss, pts, an, h, floor);
    }
    case GcLayer::BatchNormTrain:
    case GcLayer::BatchNormInfer: {
      const bool train = layer == GcLayer::BatchNormTrain;
      auto x = gc_random({3, 2, 3, 3}, rng);
      auto gamma = gc_random({2}, rng, 0.5, 1.5);
      auto beta = gc_random({2}, rng);
      const auto rm = gc_random({2}, rng);
      const auto rv = gc_random({2}, rng, 0.5, 2.0);
      const double eps = 1e-5;
      auto fwd = [&](const auto& xx, const auto& g, const auto& bt, auto e) {
        using U = std::decay_t<decltype(e)>;
        return train ? kernels::batchnorm_forward_train(xx, g, bt, e)
                     : kernels::batchnorm_forward_infer(xx, g, bt, gc_cast<U>(rm), gc_cast<U>(rv), e);
      };
      const auto y0 = fwd(x, gamma, beta, eps).y;
      const auto r = gc_random(y0.shape(), rng);
      const auto ft = fwd(gc_cast<T>(x), gc_cast<T>(gamma), gc_cast<T>(beta), static_cast<T>(eps));
      const auto g = train ? kernels::batchnorm_backward_train(gc_cast<T>(r), ft, gc_cast<T>(gamma))
                           : kernels::batchnorm_backward_infer(gc_cast<T>(r), ft, gc_cast<T>(gamma));
      Tensor<double> dx = g.dx.template cast<double>(), dg = g.dgamma.template cast<double>(),
                     dbt = g.dbeta.template cast<double>();
      auto loss = [&] { return gc_project(fwd(x, gamma, beta, eps).y, r); };
      Tensor<double>* pts[] = {&x, &gamma, &beta};
      const Tensor<double>* an[] = {&dx, &dg, &dbt};
      return grad_check<double>(loss, pts, an, h, floor);
    }
    case GcLayer::Dense: {
      auto x = gc_random({3, 4}, rng);
      auto w = gc_random({4, 5}, rng);
      auto b = gc_random({5}, rng);
      const auto r = gc_random({3, 5}, rng);
      const auto g = kernels::dense_backward(gc_cast<T>(x), gc_cast<T>(w), gc_cast<T>(r));
      Tensor<double> dx = g.dx.template cast<double>(), dw = g.dw.template cast<double>(),
                     db = g.db.template cast<double>();
      auto loss = [&] { return gc_project(kernels::dense_forward(x, w, b), r); };
      Tensor<double>* pts[] = {&x, &w, &b};
      const Tensor<double>* an[] = {&dx, &dw, &db};
      return grad_check<double>(loss, pts, an, h, floor);
    }
    case GcLayer::Tanh: {
      auto x = gc_random({2, 3, 4}, rng, -2.0, 2.0);
      const auto r = gc_random(x.shape(), rng);
      const auto yt = kernels::tanh_forward(gc_cast<T>(x));
      auto dx = kernels::tanh_backward(yt, gc_cast<T>(r)).template cast<double>();
      auto loss = [&] { return gc_project(kernels::tanh_forward(x), r); };
      Tensor<double>* pts[] = {&x};
      const Tensor<double>* an[] = {&dx};
      return grad_check<double>(loss, pts, an, h, floor);
    }
    case GcLayer::SoftmaxCrossEntropy: {
      auto z = gc_random({4, 8}, rng, -3.0, 3.0);
      Tensor<double> t = gc_random({4, 8}, rng, 0.0, 1.0);
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < 8; ++k) s += t.at(i, k);
        for (std::size_t k = 0; k < 8; ++k) t.at(i, k) /= s;
      }
      const auto pt = kernels::softmax(gc_cast<T>(z));
      auto dz = kernels::softmax_cross_entropy_grad(pt, gc_cast<T>(t)).template cast<double>();
      auto loss = [&] { return kernels::cross_entropy_soft(kernels::softmax(z), t); };
      Tensor<double>* pts[] = {&z};
      const Tensor<double>* an[] = {&dz};
      return grad_check<double>(loss, pts, an, h, floor);
    }
  }
  return 0.0;
}

}  // namespace ensnet::testing
