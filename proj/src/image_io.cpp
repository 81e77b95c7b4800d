// SPDX-License-Identifier: Apache-2.0
#include "ensnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ensnet {
namespace {

Image8 read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw FormatError("cannot read PNG " + path.string() + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out{img.width, img.height, color ? 3u : 1u, {}};
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  return out;
}

// Next whitespace-delimited token of a PNM header, skipping # comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

Image8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5" && magic != "P2") throw FormatError(path.string() + ": not a PGM file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pnm_token(in));
    h = std::stoul(pnm_token(in));
    maxval = std::stoul(pnm_token(in));
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535)
    throw FormatError(path.string() + ": invalid PGM dimensions");
  Image8 out{w, h, 1, std::vector<std::uint8_t>(w * h)};
  auto scale = [&](std::size_t v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(std::min(v, maxval)) /
                                                 static_cast<double>(maxval)));
  };
  if (magic == "P2") {
    for (auto& p : out.pixels) {
      const std::string t = pnm_token(in);
      if (t.empty()) throw FormatError(path.string() + ": truncated PGM data");
      p = scale(std::stoul(t));
    }
    return out;
  }
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw FormatError(path.string() + ": truncated PGM data");
  for (std::size_t i = 0; i < w * h; ++i)
    out.pixels[i] = scale(bytes == 1 ? raw[i] : (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1]);
  return out;
}

}  // namespace

Image8 read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  in.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) return read_pgm(path);
  throw FormatError("unsupported image format: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1) throw FormatError("write_pgm needs a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw FormatError("cannot write PNG " + path.string() + ": " + img.message);
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_h, std::size_t out_w) {
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H == out_h && W == out_w) return image;
  Tensor<float> out({C, out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < out_h; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                   static_cast<double>(H - 1));
      const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, H - 1);
      const double wy = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < out_w; ++x) {
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(W - 1));
        const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, W - 1);
        const double wx = fx - static_cast<double>(x0);
        const float* p = image.data() + c * H * W;
        const double v = (p[y0 * W + x0] * (1 - wx) + p[y0 * W + x1] * wx) * (1 - wy) +
                         (p[y1 * W + x0] * (1 - wx) + p[y1 * W + x1] * wx) * wy;
        out[(c * out_h + y) * out_w + x] = static_cast<float>(v);
      }
    }
  return out;
}

Tensor<float> image_to_tensor(const Image8& image, std::size_t channels, std::size_t size) {
  if (channels != 1 && channels != 3) throw ShapeError("only 1 or 3 input channels are supported");
  const std::size_t W = image.width, H = image.height, n = W * H;
  if (image.pixels.size() != n * image.channels) throw FormatError("image buffer size mismatch");
  Tensor<float> t({channels, H, W});
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = image.pixels.data() + i * image.channels;
    if (channels == 1) {
      const double gray = image.channels == 1 ? px[0] : 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      t[i] = static_cast<float>(gray / 255.0);
    } else {
      for (std::size_t c = 0; c < 3; ++c)
        t[c * n + i] = static_cast<float>((image.channels == 1 ? px[0] : px[c]) / 255.0);
    }
  }
  return resize_bilinear(t, size, size);
}

Image8 tensor_to_image(const Tensor<float>& image) {
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (C != 1 && C != 3) throw ShapeError("tensor_to_image needs 1 or 3 channels");
  Image8 out{W, H, C, std::vector<std::uint8_t>(W * H * C)};
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < W * H; ++i)
      out.pixels[i * C + c] = static_cast<std::uint8_t>(
          std::lround(255.0 * std::clamp(static_cast<double>(image[c * W * H + i]), 0.0, 1.0)));
  return out;
}

}  // namespace ensnet
