// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ensnet/tensor.hpp"

namespace ensnet {

/// 8-bit image, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary/ASCII PGM or PNG (detected by content). Alpha is dropped,
/// palette and 16-bit PNGs are expanded/stripped to 8-bit.
Image8 read_image(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image8& image);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Converts to a [channels,size,size] tensor in [0,1]: grayscale via
/// ITU-R 601 luma when channels == 1 (gray replicated when channels == 3),
/// then bilinear resize with half-pixel centres.
Tensor<float> image_to_tensor(const Image8& image, std::size_t channels, std::size_t size);

/// Bilinear resize of [C,H,W] to [C,out_h,out_w] (half-pixel centres,
/// edge clamped).
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_h, std::size_t out_w);

/// Quantizes a [1,H,W] or [3,H,W] tensor in [0,1] to 8 bits.
Image8 tensor_to_image(const Tensor<float>& image);

}  // namespace ensnet
