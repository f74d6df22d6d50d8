#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "steerkit/errors.hpp"

namespace steerkit {

/// Interleaved 8-bit RGB image, row-major.
struct ImageU8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  static ImageU8 filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::uint8_t& at(int row, int col, int ch) {
    return pixels[(static_cast<size_t>(row) * width + col) * 3 + ch];
  }
  std::uint8_t at(int row, int col, int ch) const {
    return pixels[(static_cast<size_t>(row) * width + col) * 3 + ch];
  }
  bool valid() const {
    return height > 0 && width > 0 && pixels.size() == static_cast<size_t>(height) * width * 3;
  }
};

// Baseline JPEG, 8-bit RGB only.
std::vector<std::uint8_t> encode_jpeg(const ImageU8& img, int quality = 90);
ImageU8 decode_jpeg(std::span<const std::uint8_t> bytes);
void save_jpeg(const ImageU8& img, const std::filesystem::path& path, int quality = 90);
ImageU8 load_jpeg(const std::filesystem::path& path);

ImageU8 flip_horizontal(const ImageU8& img);

/// Rotation about the image centre with bilinear sampling; out-of-frame
/// samples clamp to the nearest edge pixel. Positive degrees rotate the image
/// content clockwise.
ImageU8 rotate_about_center(const ImageU8& img, double degrees);

ImageU8 crop(const ImageU8& img, int top, int left, int out_h, int out_w);

/// Bilinear resize with half-pixel-centre sampling (mirror-symmetric inputs
/// stay mirror-symmetric).
ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);

}  // namespace steerkit
