// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ensnet/augment.hpp"

using namespace ensnet;

namespace {

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

Tensor<float> smooth_image(std::size_t C, std::size_t H, std::size_t W) {
  Tensor<float> t({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        t[(c * H + y) * W + x] = static_cast<float>(
            0.5 + 0.25 * std::sin(0.21 * double(x) + 0.3 * double(c)) * std::cos(0.17 * double(y)));
  return t;
}

Tensor<float> random_image(std::size_t C, std::size_t H, std::size_t W, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Tensor<float> t({C, H, W});
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("apply_affine identity") {
  const auto img = random_image(2, 12, 9, 1);
  CHECK(max_abs_diff(apply_affine(img, 1.0, 0.0, 0.0, 0.0), img) <= 1e-6);
  CHECK_THROWS_AS(apply_affine(img, 0.0, 0.0, 0.0, 0.0), ShapeError);
}

TEST_CASE("apply_affine 90 degree rotation matches a nearest-neighbour coordinate oracle") {
  const std::size_t S = 9;
  Tensor<float> img({1, S, S});
  // Asymmetric two-pixel pattern: right of centre and above centre.
  img[4 * S + 6] = 1.0f;
  img[2 * S + 4] = 0.5f;
  const auto out = apply_affine(img, 1.0, 0.0, 0.0, 90.0);

  // Oracle: out(x, y) = in(c + R(-90)(p - c)), rounded to the nearest pixel.
  const double c = (S - 1) / 2.0;
  Tensor<float> expect({1, S, S});
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double dx = double(x) - c, dy = double(y) - c;
      const long sx = std::lround(c + dy), sy = std::lround(c - dx);
      if (sx >= 0 && sy >= 0 && sx < long(S) && sy < long(S)) expect[y * S + x] = img[std::size_t(sy) * S + std::size_t(sx)];
    }
  CHECK(max_abs_diff(out, expect) <= 1e-6);
  // +x turns towards +y.
  CHECK(out[6 * S + 4] == doctest::Approx(1.0f));
  CHECK(out[4 * S + 6] == doctest::Approx(0.5f));
}

TEST_CASE("apply_affine translation of a ramp") {
  const std::size_t H = 5, W = 8;
  Tensor<float> ramp({1, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) ramp[y * W + x] = float(x) / float(W - 1);
  const auto out = apply_affine(ramp, 1.0, 1.0, 0.0, 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    CHECK(out[y * W] == doctest::Approx(ramp[y * W]));  // replicated edge
    for (std::size_t x = 1; x < W; ++x) CHECK(out[y * W + x] == doctest::Approx(ramp[y * W + x - 1]).epsilon(1e-6));
  }
}

TEST_CASE("apply_affine scale 2 then 0.5 is close to the identity away from borders") {
  const std::size_t S = 48;
  const auto img = smooth_image(1, S, S);
  const auto back = apply_affine(apply_affine(img, 2.0, 0, 0, 0), 0.5, 0, 0, 0);
  double worst = 0;
  for (std::size_t y = 14; y < 34; ++y)
    for (std::size_t x = 14; x < 34; ++x) worst = std::max(worst, std::abs(double(back[y * S + x]) - img[y * S + x]));
  CHECK(worst <= 1e-2);
}

TEST_CASE("gaussian kernel and blur") {
  for (double sigma : {0.3, 1.0, 1.5, 2.7}) {
    const auto k = gaussian_kernel(sigma);
    CHECK(k.size() == 2 * std::size_t(std::ceil(3 * sigma)) + 1);
    double s = 0;
    for (double v : k) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  CHECK(gaussian_kernel(0.0) == std::vector<double>{1.0});

  const auto img = random_image(1, 10, 10, 2);
  CHECK(gaussian_blur(img, 0.0) == img);

  const Tensor<float> flat({2, 9, 11}, 0.37f);
  CHECK(max_abs_diff(gaussian_blur(flat, 1.3), flat) <= 1e-6);

  Tensor<float> impulse({1, 15, 15});
  impulse[7 * 15 + 7] = 1.0f;
  const auto b = gaussian_blur(impulse, 1.0);
  CHECK(std::abs(b[7 * 15 + 7] - 0.1592) <= 0.01);
  double mass = 0;
  for (float v : b.values()) mass += v;
  CHECK(std::abs(mass - 1.0) <= 1e-6);
}

TEST_CASE("random_augment identity, determinism, shape and range") {
  const auto img = random_image(1, 16, 16, 3);
  AugmentConfig off;
  off.probability = 0.0;
  std::mt19937_64 r0(1);
  CHECK(random_augment(img, off, r0) == img);

  AugmentConfig strong;
  strong.probability = 1.0;
  strong.intensity_scale_min = 1.5;
  strong.intensity_scale_max = 2.0;
  strong.intensity_offset = 0.4;
  bool changed = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    const auto oa = random_augment(img, strong, a);
    const auto ob = random_augment(img, strong, b);
    CHECK(oa == ob);
    CHECK(oa.shape() == img.shape());
    for (float v : oa.values()) CHECK((v >= 0.0f && v <= 1.0f));
    changed |= !(oa == img);
  }
  CHECK(changed);

  std::mt19937_64 r1(1);
  CHECK_THROWS_AS(random_augment(random_image(1, 7, 16, 4), strong, r1), ShapeError);
}

TEST_CASE("augment config validation") {
  AugmentConfig c;
  CHECK_NOTHROW(c.validate());
  c.probability = 1.5;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.intensity_scale_max = 0.5;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = {};
  c.blur_sigma_min = -1;
  CHECK_THROWS_AS(c.validate(), ShapeError);
}
