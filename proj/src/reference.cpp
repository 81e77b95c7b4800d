// SPDX-License-Identifier: Apache-2.0
#include "ensnet/reference.hpp"

#include <cmath>

namespace ensnet::reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
    throw ShapeError("reference conv2d: shape mismatch");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t F = w.dim(0), K = w.dim(2);
  const std::size_t Ho = conv_out_size(H, K, stride, pad), Wo = conv_out_size(W, K, stride, pad);
  Tensor<T> y({B, F, Ho, Wo});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          T acc = b[f];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
                const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W))
                  continue;
                acc += w.at(f, c, ki, kj) * x.at(n, c, ih, iw);
              }
          y.at(n, f, oh, ow) = acc;
        }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                             std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t F = w.dim(0), K = w.dim(2);
  const std::size_t Ho = dy.dim(2), Wo = dy.dim(3);
  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({F})};
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          const T d = dy.at(n, f, oh, ow);
          g.db[f] += d;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
                const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W))
                  continue;
                g.dw.at(f, c, ki, kj) += d * x.at(n, c, ih, iw);
                g.dx.at(n, c, ih, iw) += d * w.at(f, c, ki, kj);
              }
        }
  return g;
}

template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& x) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult<T> r{Tensor<T>({B, C, Ho, Wo}), {}};
  r.argmax.reserve(B * C * Ho * Wo);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          bool first = true;
          T best{};
          std::size_t at = 0;
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const T v = x.at(n, c, 2 * oh + di, 2 * ow + dj);
              if (first || v > best) {
                best = v;
                at = ((n * C + c) * H + 2 * oh + di) * W + 2 * ow + dj;
                first = false;
              }
            }
          r.y.at(n, c, oh, ow) = best;
          r.argmax.push_back(static_cast<std::uint32_t>(at));
        }
  return r;
}

template <typename T>
BatchNormForward<T> batchnorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                            const Tensor<T>& beta, T eps) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double m = static_cast<double>(B * H * W);
  BatchNormForward<T> f{Tensor<T>(x.shape()), Tensor<T>(x.shape()), std::vector<T>(C),
                        std::vector<T>(C), std::vector<T>(C)};
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) mean += x.at(n, c, i, j);
    mean /= m;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) var += std::pow(x.at(n, c, i, j) - mean, 2);
    var /= m;
    f.mean[c] = static_cast<T>(mean);
    f.var[c] = static_cast<T>(var);
    f.inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          const T xh = static_cast<T>((x.at(n, c, i, j) - mean) / std::sqrt(var + eps));
          f.xhat.at(n, c, i, j) = xh;
          f.y.at(n, c, i, j) = gamma[c] * xh + beta[c];
        }
  }
  return f;
}

// Staged chain rule through mean and variance.
template <typename T>
BatchNormGrads<T> batchnorm_backward_train(const Tensor<T>& dy, const BatchNormForward<T>& fwd,
                                           const Tensor<T>& gamma) {
  const std::size_t B = dy.dim(0), C = dy.dim(1), H = dy.dim(2), W = dy.dim(3);
  const double m = static_cast<double>(B * H * W);
  BatchNormGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>({C}), Tensor<T>({C})};
  for (std::size_t c = 0; c < C; ++c) {
    const double var_eps = 1.0 / (static_cast<double>(fwd.inv_std[c]) * fwd.inv_std[c]);
    const double sd = std::sqrt(var_eps);
    double dvar = 0.0, dmean = 0.0, centered_sum = 0.0;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          const double d = dy.at(n, c, i, j);
          const double xh = fwd.xhat.at(n, c, i, j);
          const double centered = xh * sd;
          const double dxhat = d * gamma[c];
          g.dgamma[c] += static_cast<T>(d * xh);
          g.dbeta[c] += static_cast<T>(d);
          dvar += dxhat * centered * -0.5 * std::pow(var_eps, -1.5);
          dmean += -dxhat / sd;
          centered_sum += centered;
        }
    dmean += dvar * (-2.0 * centered_sum / m);
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          const double centered = static_cast<double>(fwd.xhat.at(n, c, i, j)) * sd;
          const double dxhat = dy.at(n, c, i, j) * static_cast<double>(gamma[c]);
          g.dx.at(n, c, i, j) =
              static_cast<T>(dxhat / sd + dvar * 2.0 * centered / m + dmean / m);
        }
  }
  return g;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.dim(1) != w.dim(0)) throw ShapeError("reference dense: dimension mismatch");
  const std::size_t B = x.dim(0), D = x.dim(1), U = w.dim(1);
  Tensor<T> y({B, U});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t u = 0; u < U; ++u) {
      T acc = b[u];
      for (std::size_t d = 0; d < D; ++d) acc += x.at(n, d) * w.at(d, u);
      y.at(n, u) = acc;
    }
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
  const std::size_t B = x.dim(0), D = x.dim(1), U = w.dim(1);
  DenseGrads<T> g{Tensor<T>({B, D}), Tensor<T>({D, U}), Tensor<T>({U})};
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t u = 0; u < U; ++u) {
      const T d = dy.at(n, u);
      g.db[u] += d;
      for (std::size_t k = 0; k < D; ++k) {
        g.dw.at(k, u) += x.at(n, k) * d;
        g.dx.at(n, k) += w.at(k, u) * d;
      }
    }
  return g;
}

#define ENSNET_INSTANTIATE_REFERENCE(T)                                                       \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                    std::size_t, std::size_t);                                \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        std::size_t, std::size_t);                            \
  template PoolResult<T> maxpool2_forward(const Tensor<T>&);                                  \
  template BatchNormForward<T> batchnorm_forward_train(const Tensor<T>&, const Tensor<T>&,    \
                                                       const Tensor<T>&, T);                  \
  template BatchNormGrads<T> batchnorm_backward_train(                                        \
      const Tensor<T>&, const BatchNormForward<T>&, const Tensor<T>&);                        \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

ENSNET_INSTANTIATE_REFERENCE(float)
ENSNET_INSTANTIATE_REFERENCE(double)

#undef ENSNET_INSTANTIATE_REFERENCE

}  // namespace ensnet::reference
