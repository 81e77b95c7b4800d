// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "ensnet/tensor.hpp"

namespace ensnet {

/// Central-difference gradient check.
///
/// `loss` evaluates a scalar from the current contents of `points`; for each
/// element of each point the analytic derivative in the matching `analytic`
/// tensor is compared against (f(x+h) - f(x-h)) / 2h. Returns the maximum of
/// |a - n| / max(|a|, |n|, floor) over all elements; `floor` switches
/// near-zero elements to an absolute comparison.
template <typename T, typename LossFn>
double grad_check(LossFn&& loss, std::span<Tensor<T>* const> points,
                  std::span<const Tensor<T>* const> analytic, double h, double floor = 1e-8) {
  if (points.size() != analytic.size())
    throw std::invalid_argument("grad_check: points/analytic count mismatch");
  double worst = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    Tensor<T>& x = *points[p];
    const Tensor<T>& a = *analytic[p];
    if (a.shape() != x.shape()) throw ShapeError("grad_check: analytic gradient shape mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T saved = x[i];
      // The realized step can differ from h once rounded to T.
      const T x_up = static_cast<T>(saved + h);
      const T x_down = static_cast<T>(saved - h);
      x[i] = x_up;
      const double up = loss();
      x[i] = x_down;
      const double down = loss();
      x[i] = saved;
      const double numeric =
          (up - down) / (static_cast<double>(x_up) - static_cast<double>(x_down));
      const double an = static_cast<double>(a[i]);
      const double denom = std::max({std::abs(an), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(an - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ensnet
