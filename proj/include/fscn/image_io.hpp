#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace fscn {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interleaved 8-bit RGB.
struct Rgb8Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // h * w * 3
};

/// Single-channel 16-bit.
struct Gray16Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> pixels;  // h * w
};

Rgb8Image read_png_rgb8(const std::filesystem::path& path);
Gray16Image read_png_gray16(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Rgb8Image& image);
void write_png(const std::filesystem::path& path, const Gray16Image& image);

}  // namespace fscn
