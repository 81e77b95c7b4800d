// SPDX-License-Identifier: Apache-2.0
//
// Layer forward/backward kernels. The versions in ensnet::kernels are the
// production ones (im2col + GEMM, OpenMP across samples/channels); the
// naive loops in ensnet::reference (reference.hpp) compute the same
// quantities and exist for testing and benchmarking.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ensnet/tensor.hpp"

namespace ensnet {

enum class Padding { Same, Valid };

/// Zero padding on each side for a square kernel of size k.
inline std::size_t padding_amount(Padding p, std::size_t k) {
  return p == Padding::Same ? (k - 1) / 2 : 0;
}

/// Spatial output size of a convolution; throws ShapeError on collapse.
std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

template <typename T>
struct ConvGrads {
  Tensor<T> dx;  // [B,C,H,W]
  Tensor<T> dw;  // [F,C,k,k]
  Tensor<T> db;  // [F]
};

template <typename T>
struct PoolResult {
  Tensor<T> y;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
struct BatchNormForward {
  Tensor<T> y;
  Tensor<T> xhat;            // normalized input, before gamma/beta
  std::vector<T> mean;       // per-channel statistic used
  std::vector<T> var;        // per-channel (biased) variance used
  std::vector<T> inv_std;    // 1/sqrt(var+eps)
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx;
  Tensor<T> dgamma;
  Tensor<T> dbeta;
};

template <typename T>
struct DenseGrads {
  Tensor<T> dx;  // [B,D]
  Tensor<T> dw;  // [D,U]
  Tensor<T> db;  // [U]
};

namespace kernels {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t stride, std::size_t pad);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                             std::size_t stride, std::size_t pad);

/// 2x2 window, stride 2, floor semantics. Ties go to the first maximum in
/// row-major window order.
template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape);

/// Training mode: per-channel batch statistics over (B,H,W).
template <typename T>
BatchNormForward<T> batchnorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                            const Tensor<T>& beta, T eps);
template <typename T>
BatchNormForward<T> batchnorm_forward_infer(const Tensor<T>& x, const Tensor<T>& gamma,
                                            const Tensor<T>& beta, const Tensor<T>& running_mean,
                                            const Tensor<T>& running_var, T eps);
/// Backward through batch statistics (training-mode forward).
template <typename T>
BatchNormGrads<T> batchnorm_backward_train(const Tensor<T>& dy, const BatchNormForward<T>& fwd,
                                           const Tensor<T>& gamma);
/// Backward with statistics held constant (inference-mode forward).
template <typename T>
BatchNormGrads<T> batchnorm_backward_infer(const Tensor<T>& dy, const BatchNormForward<T>& fwd,
                                           const Tensor<T>& gamma);

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy);

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x);
/// dx = dy * (1 - y^2), y being the forward output.
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// Row-wise softmax over [B,K] with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

inline constexpr double kLogEps = 1e-12;

/// Mean over rows of -sum_k t_k ln(p_k + eps). Rows of both arguments must
/// be distributions within 1e-6.
template <typename T>
T cross_entropy_soft(const Tensor<T>& predicted, const Tensor<T>& target);
/// Gradient of cross_entropy_soft(softmax(z), t) w.r.t. z: (p - t) / B.
template <typename T>
Tensor<T> softmax_cross_entropy_grad(const Tensor<T>& predicted, const Tensor<T>& target,
                                     T scale = T{1});

}  // namespace kernels
}  // namespace ensnet
