// SPDX-License-Identifier: Apache-2.0
//
// Serial, loop-by-definition versions of the heavy kernels. Slow; used by the
// unit tests as an independent check of ensnet::kernels and by the benchmark
// as a baseline.
#pragma once

#include "ensnet/kernels.hpp"

namespace ensnet::reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t stride, std::size_t pad);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                             std::size_t stride, std::size_t pad);

template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& x);

template <typename T>
BatchNormForward<T> batchnorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                            const Tensor<T>& beta, T eps);
template <typename T>
BatchNormGrads<T> batchnorm_backward_train(const Tensor<T>& dy, const BatchNormForward<T>& fwd,
                                           const Tensor<T>& gamma);

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy);

}  // namespace ensnet::reference
