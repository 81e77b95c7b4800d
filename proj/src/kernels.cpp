// SPDX-License-Identifier: Apache-2.0
#include "ensnet/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ensnet {

std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  if (k > in + 2 * pad)
    throw ShapeError("kernel " + std::to_string(k) + " larger than padded input " +
                     std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

namespace kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

struct ConvDims {
  std::size_t B, C, H, W, F, K, Ho, Wo, stride, pad;
  std::size_t ckk() const { return C * K * K; }
  std::size_t hw_out() const { return Ho * Wo; }
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d expects input [B,C,H,W] and weights [F,C,k,k]");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d input channels " + std::to_string(x.dim(1)) +
                     " != weight channels " + std::to_string(w.dim(1)));
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d kernel must be square");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), 0, 0, stride, pad};
  d.Ho = conv_out_size(d.H, d.K, stride, pad);
  d.Wo = conv_out_size(d.W, d.K, stride, pad);
  return d;
}

// col[(c*K + ki)*K + kj][oh*Wo + ow] = x[c][oh*s + ki - pad][ow*s + kj - pad]
template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
  const std::size_t hw = d.hw_out();
  for (std::size_t c = 0; c < d.C; ++c) {
    for (std::size_t ki = 0; ki < d.K; ++ki) {
      for (std::size_t kj = 0; kj < d.K; ++kj) {
        T* row = col + ((c * d.K + ki) * d.K + kj) * hw;
        for (std::size_t oh = 0; oh < d.Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * d.stride + ki) -
                                    static_cast<std::ptrdiff_t>(d.pad);
          T* out = row + oh * d.Wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.H)) {
            std::fill(out, out + d.Wo, T{0});
            continue;
          }
          const T* src = x + (c * d.H + static_cast<std::size_t>(ih)) * d.W;
          for (std::size_t ow = 0; ow < d.Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * d.stride + kj) -
                                      static_cast<std::ptrdiff_t>(d.pad);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(d.W))
                          ? T{0}
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* dx) {
  const std::size_t hw = d.hw_out();
  for (std::size_t c = 0; c < d.C; ++c) {
    for (std::size_t ki = 0; ki < d.K; ++ki) {
      for (std::size_t kj = 0; kj < d.K; ++kj) {
        const T* row = col + ((c * d.K + ki) * d.K + kj) * hw;
        for (std::size_t oh = 0; oh < d.Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * d.stride + ki) -
                                    static_cast<std::ptrdiff_t>(d.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.H)) continue;
          T* dst = dx + (c * d.H + static_cast<std::size_t>(ih)) * d.W;
          const T* in = row + oh * d.Wo;
          for (std::size_t ow = 0; ow < d.Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * d.stride + kj) -
                                      static_cast<std::ptrdiff_t>(d.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(d.W))
              dst[static_cast<std::size_t>(iw)] += in[ow];
          }
        }
      }
    }
  }
}

// Weight-gradient partial sums are formed over fixed-size sample chunks and
// reduced in chunk order, so results do not depend on the thread count.
constexpr std::size_t kGradChunk = 4;

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t stride, std::size_t pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  if (b.size() != d.F) throw ShapeError("conv2d bias length must equal filter count");
  Tensor<T> y({d.B, d.F, d.Ho, d.Wo});
  const std::size_t ckk = d.ckk(), hw = d.hw_out();
  const std::size_t in_stride = d.C * d.H * d.W, out_stride = d.F * hw;
  ConstMatMap<T> wm(w.data(), d.F, ckk);

#pragma omp parallel
  {
    AlignedVector<T> col(ckk * hw);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(d.B); ++n) {
      im2col(x.data() + n * in_stride, d, col.data());
      MatMap<T> ym(y.data() + n * out_stride, d.F, hw);
      ym.noalias() = wm * ConstMatMap<T>(col.data(), ckk, hw);
      for (std::size_t f = 0; f < d.F; ++f) ym.row(f).array() += b[f];
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                             std::size_t stride, std::size_t pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  if (dy.shape() != Shape{d.B, d.F, d.Ho, d.Wo})
    throw ShapeError("conv2d backward: output gradient shape " + shape_str(dy.shape()));
  const std::size_t ckk = d.ckk(), hw = d.hw_out();
  const std::size_t in_stride = d.C * d.H * d.W, out_stride = d.F * hw;
  const std::size_t chunks = (d.B + kGradChunk - 1) / kGradChunk;

  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({d.F})};
  AlignedVector<T> dw_parts(chunks * d.F * ckk, T{0});
  ConstMatMap<T> wm(w.data(), d.F, ckk);

#pragma omp parallel
  {
    AlignedVector<T> col(ckk * hw), dcol(ckk * hw);
#pragma omp for schedule(static)
    for (std::ptrdiff_t chunk = 0; chunk < static_cast<std::ptrdiff_t>(chunks); ++chunk) {
      MatMap<T> dw_part(dw_parts.data() + chunk * d.F * ckk, d.F, ckk);
      const std::size_t n0 = chunk * kGradChunk, n1 = std::min(d.B, n0 + kGradChunk);
      for (std::size_t n = n0; n < n1; ++n) {
        ConstMatMap<T> dym(dy.data() + n * out_stride, d.F, hw);
        im2col(x.data() + n * in_stride, d, col.data());
        dw_part.noalias() += dym * ConstMatMap<T>(col.data(), ckk, hw).transpose();
        MatMap<T>(dcol.data(), ckk, hw).noalias() = wm.transpose() * dym;
        col2im_add(dcol.data(), d, g.dx.data() + n * in_stride);
      }
    }
  }

  MatMap<T> dw(g.dw.data(), d.F, ckk);
  for (std::size_t chunk = 0; chunk < chunks; ++chunk)
    dw += ConstMatMap<T>(dw_parts.data() + chunk * d.F * ckk, d.F, ckk);
  for (std::size_t n = 0; n < d.B; ++n)
    for (std::size_t f = 0; f < d.F; ++f) {
      const T* row = dy.data() + n * out_stride + f * hw;
      T s{0};
      for (std::size_t i = 0; i < hw; ++i) s += row[i];
      g.db[f] += s;
    }
  return g;
}

template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("maxpool2 expects [B,C,H,W]");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < 2 || W < 2) throw ShapeError("maxpool2 needs spatial dims >= 2, got " + shape_str(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult<T> r{Tensor<T>({B, C, Ho, Wo}), std::vector<std::uint32_t>(B * C * Ho * Wo)};

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t plane = 0; plane < static_cast<std::ptrdiff_t>(B * C); ++plane) {
    const std::size_t in_base = plane * H * W, out_base = plane * Ho * Wo;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        std::size_t best = in_base + 2 * oh * W + 2 * ow;
        const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
        for (std::size_t c : cand)
          if (x[c] > x[best]) best = c;
        r.y[out_base + oh * Wo + ow] = x[best];
        r.argmax[out_base + oh * Wo + ow] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape) {
  if (dy.size() != argmax.size()) throw ShapeError("maxpool2 backward: argmax/gradient mismatch");
  Tensor<T> dx(input_shape);
  // Windows do not overlap, so each input receives at most one contribution.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(dy.size()); ++i)
    dx[argmax[i]] += dy[i];
  return dx;
}

namespace {

template <typename T>
void check_bn_args(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  if (x.rank() != 4) throw ShapeError("batchnorm expects [B,C,H,W]");
  if (gamma.size() != x.dim(1) || beta.size() != x.dim(1))
    throw ShapeError("batchnorm gamma/beta must have one entry per channel");
}

template <typename T>
void bn_apply(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
              BatchNormForward<T>& f) {
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
    const T mu = f.mean[c], is = f.inv_std[c], g = gamma[c], bt = beta[c];
    for (std::size_t n = 0; n < B; ++n) {
      const std::size_t base = (n * C + c) * HW;
      auto xh = ArrMap<T>(f.xhat.data() + base, HW);
      xh = (ConstArrMap<T>(x.data() + base, HW) - mu) * is;
      ArrMap<T>(f.y.data() + base, HW) = g * xh + bt;
    }
  }
}

}  // namespace

template <typename T>
BatchNormForward<T> batchnorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                            const Tensor<T>& beta, T eps) {
  check_bn_args(x, gamma, beta);
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(B * HW);
  BatchNormForward<T> f{Tensor<T>(x.shape()), Tensor<T>(x.shape()), std::vector<T>(C),
                        std::vector<T>(C), std::vector<T>(C)};
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
    // Vectorized sums within a plane, double accumulation across planes.
    double sum = 0.0;
    for (std::size_t n = 0; n < B; ++n) sum += ConstArrMap<T>(x.data() + (n * C + c) * HW, HW).sum();
    const double mean = sum / count;
    const T mean_t = static_cast<T>(mean);
    double sq = 0.0;
    for (std::size_t n = 0; n < B; ++n)
      sq += (ConstArrMap<T>(x.data() + (n * C + c) * HW, HW) - mean_t).square().sum();
    const double var = sq / count;
    f.mean[c] = static_cast<T>(mean);
    f.var[c] = static_cast<T>(var);
    f.inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  }
  bn_apply(x, gamma, beta, f);
  return f;
}

template <typename T>
BatchNormForward<T> batchnorm_forward_infer(const Tensor<T>& x, const Tensor<T>& gamma,
                                            const Tensor<T>& beta, const Tensor<T>& running_mean,
                                            const Tensor<T>& running_var, T eps) {
  check_bn_args(x, gamma, beta);
  const std::size_t C = x.dim(1);
  if (running_mean.size() != C || running_var.size() != C)
    throw ShapeError("batchnorm running statistics must have one entry per channel");
  BatchNormForward<T> f{Tensor<T>(x.shape()), Tensor<T>(x.shape()), 
                        std::vector<T>(running_mean.values().begin(), running_mean.values().end()),
                        std::vector<T>(running_var.values().begin(), running_var.values().end()),
                        std::vector<T>(C)};
  for (std::size_t c = 0; c < C; ++c) f.inv_std[c] = T{1} / std::sqrt(running_var[c] + eps);
  bn_apply(x, gamma, beta, f);
  return f;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward_train(const Tensor<T>& dy, const BatchNormForward<T>& fwd,
                                           const Tensor<T>& gamma) {
  const std::size_t B = dy.dim(0), C = dy.dim(1), HW = dy.dim(2) * dy.dim(3);
  const double count = static_cast<double>(B * HW);
  BatchNormGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>({C}), Tensor<T>({C})};
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < B; ++n) {
      const std::size_t base = (n * C + c) * HW;
      const auto d = ConstArrMap<T>(dy.data() + base, HW);
      sum_dy += d.sum();
      sum_dy_xhat += (d * ConstArrMap<T>(fwd.xhat.data() + base, HW)).sum();
    }
    g.dbeta[c] = static_cast<T>(sum_dy);
    g.dgamma[c] = static_cast<T>(sum_dy_xhat);
    // dx = gamma*inv_std * (dy - mean(dy) - xhat * mean(dy*xhat))
    const T scale = static_cast<T>(static_cast<double>(gamma[c]) * fwd.inv_std[c]);
    const T mean_dy = static_cast<T>(sum_dy / count), mean_dyx = static_cast<T>(sum_dy_xhat / count);
    for (std::size_t n = 0; n < B; ++n) {
      const std::size_t base = (n * C + c) * HW;
      ArrMap<T>(g.dx.data() + base, HW) =
          scale * (ConstArrMap<T>(dy.data() + base, HW) - mean_dy -
                   ConstArrMap<T>(fwd.xhat.data() + base, HW) * mean_dyx);
    }
  }
  return g;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward_infer(const Tensor<T>& dy, const BatchNormForward<T>& fwd,
                                           const Tensor<T>& gamma) {
  const std::size_t B = dy.dim(0), C = dy.dim(1), HW = dy.dim(2) * dy.dim(3);
  BatchNormGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>({C}), Tensor<T>({C})};
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(C); ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    const T scale = gamma[c] * fwd.inv_std[c];
    for (std::size_t n = 0; n < B; ++n) {
      const std::size_t base = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xhat += static_cast<double>(dy[base + i]) * fwd.xhat[base + i];
        g.dx[base + i] = dy[base + i] * scale;
      }
    }
    g.dbeta[c] = static_cast<T>(sum_dy);
    g.dgamma[c] = static_cast<T>(sum_dy_xhat);
  }
  return g;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2) throw ShapeError("dense expects input [B,D] and weights [D,U]");
  if (x.dim(1) != w.dim(0))
    throw ShapeError("dense input width " + std::to_string(x.dim(1)) + " != weight rows " +
                     std::to_string(w.dim(0)));
  if (b.size() != w.dim(1)) throw ShapeError("dense bias length must equal unit count");
  const std::size_t B = x.dim(0), D = x.dim(1), U = w.dim(1);
  Tensor<T> y({B, U});
  MatMap<T> ym(y.data(), B, U);
  ym.noalias() = ConstMatMap<T>(x.data(), B, D) * ConstMatMap<T>(w.data(), D, U);
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.data(), U);
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
  const std::size_t B = x.dim(0), D = x.dim(1), U = w.dim(1);
  if (dy.shape() != Shape{B, U}) throw ShapeError("dense backward: output gradient shape mismatch");
  DenseGrads<T> g{Tensor<T>({B, D}), Tensor<T>({D, U}), Tensor<T>({U})};
  ConstMatMap<T> dym(dy.data(), B, U);
  MatMap<T>(g.dx.data(), B, D).noalias() = dym * ConstMatMap<T>(w.data(), D, U).transpose();
  MatMap<T>(g.dw.data(), D, U).noalias() = ConstMatMap<T>(x.data(), B, D).transpose() * dym;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.db.data(), U) = dym.colwise().sum();
  return g;
}

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  constexpr std::ptrdiff_t kBlock = 4096;
  // Eigen's packet tanh; the scalar libm call does not vectorize.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i0 = 0; i0 < n; i0 += kBlock) {
    const std::ptrdiff_t len = std::min(kBlock, n - i0);
    ArrMap<T>(y.data() + i0, len) = ConstArrMap<T>(x.data() + i0, len).tanh();
  }
  return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (y.size() != dy.size()) throw ShapeError("tanh backward: shape mismatch");
  Tensor<T> dx(y.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dx[i] = dy[i] * (T{1} - y[i] * y[i]);
  return dx;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [B,K]");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t n = 0; n < B; ++n) {
    const T* z = logits.data() + n * K;
    T* out = p.data() + n * K;
    const T mx = *std::max_element(z, z + K);
    T sum{0};
    for (std::size_t k = 0; k < K; ++k) sum += (out[k] = std::exp(z[k] - mx));
    for (std::size_t k = 0; k < K; ++k) out[k] /= sum;
  }
  return p;
}

namespace {

template <typename T>
void check_distribution_rows(const Tensor<T>& t, const char* what) {
  const std::size_t B = t.dim(0), K = t.dim(1);
  for (std::size_t n = 0; n < B; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (t.at(n, k) < T{0}) throw ShapeError(std::string(what) + " row has a negative entry");
      s += t.at(n, k);
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw ShapeError(std::string(what) + " row " + std::to_string(n) +
                       " is not normalized (sum " + std::to_string(s) + ")");
  }
}

}  // namespace

template <typename T>
T cross_entropy_soft(const Tensor<T>& predicted, const Tensor<T>& target) {
  if (predicted.rank() != 2 || predicted.shape() != target.shape())
    throw ShapeError("cross_entropy_soft expects matching [B,K] tensors");
  check_distribution_rows(predicted, "predicted");
  check_distribution_rows(target, "target");
  const std::size_t B = predicted.dim(0), K = predicted.dim(1);
  double loss = 0.0;
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t k = 0; k < K; ++k)
      loss -= static_cast<double>(target.at(n, k)) *
              std::log(static_cast<double>(predicted.at(n, k)) + kLogEps);
  return static_cast<T>(loss / static_cast<double>(B));
}

template <typename T>
Tensor<T> softmax_cross_entropy_grad(const Tensor<T>& predicted, const Tensor<T>& target, T scale) {
  if (predicted.rank() != 2 || predicted.shape() != target.shape())
    throw ShapeError("softmax_cross_entropy_grad expects matching [B,K] tensors");
  check_distribution_rows(target, "target");
  const T s = scale / static_cast<T>(predicted.dim(0));
  Tensor<T> dz(predicted.shape());
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = (predicted[i] - target[i]) * s;
  return dz;
}

#define ENSNET_INSTANTIATE_KERNELS(T)                                                         \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                    std::size_t, std::size_t);                                \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        std::size_t, std::size_t);                            \
  template PoolResult<T> maxpool2_forward(const Tensor<T>&);                                  \
  template Tensor<T> maxpool2_backward(const Tensor<T>&, const std::vector<std::uint32_t>&,   \
                                       const Shape&);                                         \
  template BatchNormForward<T> batchnorm_forward_train(const Tensor<T>&, const Tensor<T>&,    \
                                                       const Tensor<T>&, T);                  \
  template BatchNormForward<T> batchnorm_forward_infer(const Tensor<T>&, const Tensor<T>&,    \
                                                       const Tensor<T>&, const Tensor<T>&,    \
                                                       const Tensor<T>&, T);                  \
  template BatchNormGrads<T> batchnorm_backward_train(                                        \
      const Tensor<T>&, const BatchNormForward<T>&, const Tensor<T>&);                        \
  template BatchNormGrads<T> batchnorm_backward_infer(                                        \
      const Tensor<T>&, const BatchNormForward<T>&, const Tensor<T>&);                        \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);\
  template Tensor<T> tanh_forward(const Tensor<T>&);                                          \
  template Tensor<T> tanh_backward(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> softmax(const Tensor<T>&);                                               \
  template T cross_entropy_soft(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> softmax_cross_entropy_grad(const Tensor<T>&, const Tensor<T>&, T);

ENSNET_INSTANTIATE_KERNELS(float)
ENSNET_INSTANTIATE_KERNELS(double)

#undef ENSNET_INSTANTIATE_KERNELS

}  // namespace kernels
}  // namespace ensnet
