// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gnelf {

using Color = std::array<float, 3>;

/// Linear RGB image, row-major, channels interleaved, values nominally in
/// [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, Color fill = {0.0f, 0.0f, 0.0f});

  float* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  Color pixel(int x, int y) const {
    const float* p = at(x, y);
    return {p[0], p[1], p[2]};
  }
  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height;
  }
};

/// Average over factor x factor blocks.
Image downsample(const Image& img, int factor);

/// Decodes an 8-bit RGB or RGBA PNG, compositing alpha over `background`.
Image decode_png(std::span<const std::uint8_t> bytes, Color background);
Image read_png(const std::filesystem::path& path, Color background);

/// 8-bit RGB PNG; values are clamped and rounded to the nearest code.
std::vector<std::uint8_t> encode_png(const Image& img);
void write_png(const Image& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace gnelf
