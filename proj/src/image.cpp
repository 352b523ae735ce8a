// SPDX-License-Identifier: Apache-2.0
#include "gnelf/image.hpp"

#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "gnelf/error.hpp"

namespace gnelf {

Image::Image(int w, int h, Color fill) : width(w), height(h) {
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

Image downsample(const Image& img, int factor) {
  if (factor < 1 || img.width % factor != 0 || img.height % factor != 0) {
    throw InputDomainError("downsample factor " + std::to_string(factor) + " does not divide " +
                           std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  if (factor == 1) return img;
  Image out(img.width / factor, img.height / factor);
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      float acc[3] = {0, 0, 0};
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          const float* p = img.at(x * factor + dx, y * factor + dy);
          acc[0] += p[0];
          acc[1] += p[1];
          acc[2] += p[2];
        }
      }
      float* q = out.at(x, y);
      q[0] = acc[0] * inv;
      q[1] = acc[1] * inv;
      q[2] = acc[2] * inv;
    }
  }
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes, Color background) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    throw LoadError(std::string("png decode failed: ") + desc.message);
  }
  desc.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, rgba.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw LoadError(std::string("png decode failed: ") + desc.message);
  }
  Image img(static_cast<int>(desc.width), static_cast<int>(desc.height));
  for (std::size_t i = 0, n = static_cast<std::size_t>(img.width) * img.height; i < n; ++i) {
    const float a = rgba[4 * i + 3] / 255.0f;
    for (int c = 0; c < 3; ++c) {
      img.pixels[3 * i + c] = rgba[4 * i + c] / 255.0f * a + background[c] * (1.0f - a);
    }
  }
  return img;
}

Image read_png(const std::filesystem::path& path, Color background) {
  const auto bytes = read_file(path);
  try {
    return decode_png(bytes, background);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw InputDomainError("cannot encode an empty image");
  std::vector<std::uint8_t> rgb(img.pixels.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    rgb[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encode failed: ") + desc.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encode failed: ") + desc.message);
  }
  out.resize(size);
  return out;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  write_file_atomic(path, encode_png(img));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace gnelf
