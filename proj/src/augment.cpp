// SPDX-License-Identifier: Apache-2.0
#include "ensnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ensnet {

void AugmentConfig::validate() const {
  if (rescale_range < 0 || rescale_range >= 1) throw ShapeError("augment: rescale_range must be in [0,1)");
  if (translate_range < 0 || translate_range >= 1)
    throw ShapeError("augment: translate_range must be in [0,1)");
  if (rotate_degrees < 0) throw ShapeError("augment: rotate_degrees must be >= 0");
  if (!(intensity_scale_min > 0) || intensity_scale_max < intensity_scale_min)
    throw ShapeError("augment: intensity scale range invalid");
  if (intensity_offset < 0) throw ShapeError("augment: intensity_offset must be >= 0");
  if (blur_sigma_min < 0 || blur_sigma_max < blur_sigma_min)
    throw ShapeError("augment: blur sigma range invalid");
  if (probability < 0 || probability > 1) throw ShapeError("augment: probability must be in [0,1]");
}

namespace {

void check_image(const Tensor<float>& image) {
  if (image.rank() != 3) throw ShapeError("image tensors are [C,H,W], got " + shape_str(image.shape()));
}

float sample_bilinear(const float* plane, std::size_t H, std::size_t W, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = plane[y0 * W + x0] * (1 - fx) + plane[y0 * W + x1] * fx;
  const double bottom = plane[y1 * W + x0] * (1 - fx) + plane[y1 * W + x1] * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

}  // namespace

Tensor<float> apply_affine(const Tensor<float>& image, double scale, double tx, double ty,
                           double angle_degrees) {
  check_image(image);
  if (!(scale > 0)) throw ShapeError("apply_affine: scale must be positive");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const double cx = (static_cast<double>(W) - 1) / 2, cy = (static_cast<double>(H) - 1) / 2;
  const double a = angle_degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  Tensor<float> out(image.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const float* plane = image.data() + c * H * W;
    float* dst = out.data() + c * H * W;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        // p_in = c + R(-a) (p_out - c - t) / scale
        const double dx = (static_cast<double>(x) - cx - tx) / scale;
        const double dy = (static_cast<double>(y) - cy - ty) / scale;
        const double sx = cx + ca * dx + sa * dy;
        const double sy = cy - sa * dx + ca * dy;
        dst[y * W + x] = sample_bilinear(plane, H, W, sx, sy);
      }
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma < 0) throw ShapeError("gaussian_kernel: sigma must be >= 0");
  if (sigma == 0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i)
    sum += (k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma)));
  for (double& v : k) v /= sum;
  return k;
}

Tensor<float> gaussian_blur(const Tensor<float>& image, double sigma) {
  check_image(image);
  if (sigma == 0) return image;
  const auto k = gaussian_kernel(sigma);
  const long radius = static_cast<long>(k.size() / 2);
  const long C = static_cast<long>(image.dim(0)), H = static_cast<long>(image.dim(1)),
             W = static_cast<long>(image.dim(2));
  Tensor<float> tmp(image.shape()), out(image.shape());
  for (long c = 0; c < C; ++c) {
    const float* src = image.data() + c * H * W;
    float* mid = tmp.data() + c * H * W;
    float* dst = out.data() + c * H * W;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double acc = 0;
        for (long i = -radius; i <= radius; ++i)
          acc += k[i + radius] * src[y * W + std::clamp(x + i, 0L, W - 1)];
        mid[y * W + x] = static_cast<float>(acc);
      }
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double acc = 0;
        for (long i = -radius; i <= radius; ++i)
          acc += k[i + radius] * mid[std::clamp(y + i, 0L, H - 1) * W + x];
        dst[y * W + x] = static_cast<float>(acc);
      }
  }
  return out;
}

Tensor<float> random_augment(const Tensor<float>& image, const AugmentConfig& config,
                             std::mt19937_64& rng) {
  check_image(image);
  if (image.dim(1) < 8 || image.dim(2) < 8) throw ShapeError("random_augment needs H,W >= 8");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto coin = [&] { return unit(rng) < config.probability; };

  double scale = 1.0, angle = 0.0, tx = 0.0, ty = 0.0;
  bool geometric = false;
  if (coin()) {
    scale = uniform(1.0 - config.rescale_range, 1.0 + config.rescale_range);
    geometric = true;
  }
  if (coin()) {
    angle = uniform(-config.rotate_degrees, config.rotate_degrees);
    geometric = true;
  }
  if (coin()) {
    tx = uniform(-config.translate_range, config.translate_range) * static_cast<double>(image.dim(2));
    ty = uniform(-config.translate_range, config.translate_range) * static_cast<double>(image.dim(1));
    geometric = true;
  }
  Tensor<float> out = geometric ? apply_affine(image, scale, tx, ty, angle) : image;

  if (coin()) {
    const float s = static_cast<float>(uniform(config.intensity_scale_min, config.intensity_scale_max));
    const float o = static_cast<float>(uniform(-config.intensity_offset, config.intensity_offset));
    for (float& v : out.values()) v = v * s + o;
  }
  if (coin()) out = gaussian_blur(out, uniform(config.blur_sigma_min, config.blur_sigma_max));
  for (float& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace ensnet
