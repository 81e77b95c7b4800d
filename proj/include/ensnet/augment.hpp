// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "ensnet/tensor.hpp"

namespace ensnet {

/// Magnitudes of the per-presentation random transforms. Each of the five
/// transforms (rescale, rotate, translate, intensity, blur) is applied
/// independently with `probability`.
struct AugmentConfig {
  double rescale_range = 0.10;    // scale in 1 +- range
  double translate_range = 0.10;  // fraction of the side, each axis
  double rotate_degrees = 15.0;
  double intensity_scale_min = 0.8;
  double intensity_scale_max = 1.2;
  double intensity_offset = 0.1;  // additive, +- on the [0,1] value range
  double blur_sigma_min = 0.0;
  double blur_sigma_max = 1.5;
  double probability = 0.5;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

/// Inverse-mapped bilinear resampling of every channel of [C,H,W] under
///   p_out = c + scale * R(angle) * (p_in - c) + (tx, ty),
/// with c the image centre, coordinates (x = column, y = row) and positive
/// angles turning +x towards +y. Out-of-range samples replicate the edge.
Tensor<float> apply_affine(const Tensor<float>& image, double scale, double tx, double ty,
                           double angle_degrees);

/// Normalized sampled Gaussian, radius ceil(3 sigma). sigma 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with edge replication.
Tensor<float> gaussian_blur(const Tensor<float>& image, double sigma);

/// Order: scale -> rotate -> translate (one composed resample), then
/// intensity scale/offset, then blur; result clamped to [0,1].
Tensor<float> random_augment(const Tensor<float>& image, const AugmentConfig& config,
                             std::mt19937_64& rng);

}  // namespace ensnet
